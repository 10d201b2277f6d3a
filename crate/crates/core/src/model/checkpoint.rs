//! Plain-text checkpoints.
//!
//! ```text
//! shapeshift-checkpoint
//! format_version 1
//! channels 3
//! image_size 32
//! f1 16
//! f2 32
//! num_classes 8
//! tensor input.shift 3
//! <values, whitespace separated, shortest round-trip decimal>
//! ...
//! end
//! ```
//! Tensors appear in storage order and every value is written as an `f64`,
//! so save → load is bit-exact for `f32` and `f64` parameters.

use std::fmt::Write as _;
use std::path::Path;

use super::params::{ModelParams, ModelShape};
use super::scalar::Scalar;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "shapeshift-checkpoint";
const PER_LINE: usize = 8;

pub fn render_checkpoint<T: Scalar>(p: &ModelParams<T>) -> String {
    let sh = &p.shape;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "format_version {CHECKPOINT_VERSION}");
    for (k, v) in [
        ("channels", sh.channels),
        ("image_size", sh.image_size),
        ("f1", sh.f1),
        ("f2", sh.f2),
        ("num_classes", sh.num_classes),
    ] {
        let _ = writeln!(out, "{k} {v}");
    }
    for ((name, dims), values) in sh.tensor_dims().iter().zip(p.all_tensors()) {
        let dims: Vec<String> = dims.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "tensor {name} {}", dims.join(" "));
        for line in values.chunks(PER_LINE) {
            let line: Vec<String> = line.iter().map(|v| format!("{:?}", v.as_f64())).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out.push_str("end\n");
    out
}

fn bad(detail: impl Into<String>) -> Error {
    Error::format("checkpoint", detail)
}

pub fn parse_checkpoint<T: Scalar>(text: &str) -> Result<ModelParams<T>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("unexpected end of file, expected {what}")));
    if next("header")? != MAGIC {
        return Err(bad("missing header"));
    }
    let mut field = |key: &str| -> Result<usize> {
        let line = next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => v.trim().parse().map_err(|_| bad(format!("bad value for {key}: `{v}`"))),
            _ => Err(bad(format!("expected `{key}`, found `{line}`"))),
        }
    };
    let version = field("format_version")?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(bad(format!("unsupported format_version {version}")));
    }
    let shape = ModelShape {
        channels: field("channels")?,
        image_size: field("image_size")?,
        f1: field("f1")?,
        f2: field("f2")?,
        num_classes: field("num_classes")?,
    };
    shape.validate().map_err(|e| bad(e.to_string()))?;
    let mut params = ModelParams::<T>::zeros(shape)?;

    let mut tokens = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .skip(7)
        .flat_map(str::split_whitespace);
    for ((name, dims), tensor) in shape.tensor_dims().iter().zip(params.all_tensors_mut()) {
        if tokens.next() != Some("tensor") || tokens.next() != Some(*name) {
            return Err(bad(format!("expected tensor `{name}`")));
        }
        for &d in dims {
            let got: usize = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(format!("missing dims for `{name}`")))?;
            if got != d {
                return Err(bad(format!("tensor `{name}` has dim {got}, shape requires {d}")));
            }
        }
        for slot in tensor.iter_mut() {
            let tok = tokens.next().ok_or_else(|| bad(format!("truncated tensor `{name}`")))?;
            let v: f64 = tok.parse().map_err(|_| bad(format!("bad value `{tok}` in `{name}`")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite value in `{name}`")));
            }
            *slot = T::of_f64(v);
        }
    }
    match tokens.next() {
        Some("end") if tokens.next().is_none() => Ok(params),
        Some(other) => Err(bad(format!("expected `end`, found `{other}`"))),
        None => Err(bad("missing `end`")),
    }
}

pub fn save_checkpoint<T: Scalar>(p: &ModelParams<T>, path: &Path) -> Result<()> {
    std::fs::write(path, render_checkpoint(p)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}
