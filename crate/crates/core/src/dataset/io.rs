//! Directory export of sample sets.
//!
//! Layout: `manifest.json` plus one raw image file per sample. Image files are
//!
//! ```text
//! offset 0   8 bytes   magic "SHPIMG01"
//! offset 8   u32 LE    channels
//! offset 12  u32 LE    height
//! offset 16  u32 LE    width
//! offset 20  f32 LE    C·H·W values, channel-major (R, G, B planes), rows top to bottom
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LabeledSample;
use crate::distortions::Condition;
use crate::error::{Error, Result};
use crate::image::Image;

pub const IMAGE_MAGIC: &[u8; 8] = b"SHPIMG01";
const MANIFEST_VERSION: u32 = 1;

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let (c, h, w) = image.dims();
    let mut buf = Vec::with_capacity(20 + 4 * image.data().len());
    buf.extend_from_slice(IMAGE_MAGIC);
    for d in [c, h, w] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in image.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != IMAGE_MAGIC {
        return Err(Error::format("image file", format!("{}: bad magic", path.display())));
    }
    let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(8), dim(12), dim(16));
    let n = c * h * w;
    if bytes.len() != 20 + 4 * n {
        return Err(Error::format(
            "image file",
            format!("{}: expected {} payload bytes, found {}", path.display(), 4 * n, bytes.len() - 20),
        ));
    }
    let data = bytes[20..]
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    Image::new(c, h, w, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub shape_label: usize,
    pub texture_label: usize,
    pub condition: Option<Condition>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub format_version: u32,
    pub image_format: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub samples: Vec<ManifestEntry>,
}

/// Writes `samples` into `dir` (created if needed).
pub fn export_samples(dir: &Path, samples: &[LabeledSample]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (channels, height, width) = samples.first().map(|s| s.image.dims()).unwrap_or((0, 0, 0));
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.image.dims() != (channels, height, width) {
            return Err(Error::Shape(format!("sample {i} differs in dimensions")));
        }
        let file = format!("{i:06}.img");
        write_image(&dir.join(&file), &s.image)?;
        entries.push(ManifestEntry {
            file,
            shape_label: s.shape_label,
            texture_label: s.texture_label,
            condition: s.condition.clone(),
            seed: s.seed,
        });
    }
    let manifest = SampleManifest {
        format_version: MANIFEST_VERSION,
        image_format: String::from_utf8_lossy(IMAGE_MAGIC).into_owned(),
        channels,
        height,
        width,
        samples: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn import_samples(dir: &Path) -> Result<Vec<LabeledSample>> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SampleManifest =
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::format(
            "manifest",
            format!("unsupported format_version {}", manifest.format_version),
        ));
    }
    manifest
        .samples
        .into_iter()
        .map(|e| {
            let image = read_image(&dir.join(&e.file))?;
            if image.dims() != (manifest.channels, manifest.height, manifest.width) {
                return Err(Error::format("manifest", format!("{} has unexpected dimensions", e.file)));
            }
            Ok(LabeledSample {
                image,
                shape_label: e.shape_label,
                texture_label: e.texture_label,
                condition: e.condition,
                seed: e.seed,
            })
        })
        .collect()
}
