use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
schema_version = 1
seed = 5
replicas = 1
output_dir = "unused"

[dataset]
train_per_class = 8
test_per_class = 3
cue_conflict_count = 16

[[training]]
name = "clean"
epochs = 1

[[training]]
name = "linf-8"
epochs = 1
attack = { norm = "linf", epsilon = "8/255" }

[[distortions]]
kind = "contrast"
levels = [1.0, 0.2]

[robust]
samples = 4
steps = 2
"#;

fn shapeshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapeshift")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn invalid_input_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), &TINY.replace("schema_version = 1", "schema_version = 2"));
    let o = shapeshift(&["generate-dataset", "-c", &bad, "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!tmp.path().join("dataset").exists());

    let no_clean = write_config(tmp.path(), &TINY.replace("name = \"clean\"\nepochs = 1", "name = \"x\"\nepochs = 1\nattack = { norm = \"l2\", epsilon = 0.5 }"));
    assert_eq!(code(&shapeshift(&["run", "-c", &no_clean, "-o", tmp.path().to_str().unwrap()])), 2);

    assert_eq!(code(&shapeshift(&["no-such-command"])), 2);
    assert_eq!(code(&shapeshift(&["distort", "--input", "x", "--kind", "blur", "--level", "1"])), 2);
    assert_eq!(code(&shapeshift(&["check-trends", "--reference", "NoSuchNet"])), 2);
}

#[test]
fn runtime_failures_use_their_own_code() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.ckpt");
    let o = shapeshift(&["attack-eval", "--checkpoint", missing.to_str().unwrap(), "--epsilon", "1/255", "--input", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reference_trend_check_passes() {
    let o = shapeshift(&["check-trends", "--reference", "R50", "--strict"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("PASS (a)")), "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn subcommands_compose_into_a_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o_str = out.to_str().unwrap().to_string();
    let cfg = write_config(tmp.path(), TINY);
    let base = |extra: &[&str]| {
        let mut v = vec!["-c", cfg.as_str(), "-o", o_str.as_str()];
        v.extend_from_slice(extra);
        let o = shapeshift(&v);
        assert_eq!(code(&o), 0, "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };

    base(&["generate-dataset"]);
    let test = out.join("dataset/test");
    let test_s = test.to_str().unwrap();
    assert!(test.is_dir() && out.join("dataset/cue_conflict").is_dir());

    base(&["train", "--model", "clean"]);
    let ckpt = out.join("checkpoints/clean-r0.ckpt");
    assert!(ckpt.is_file());
    let ckpt_s = ckpt.to_str().unwrap();

    let eval = base(&["evaluate", "--checkpoint", ckpt_s, "--input", test_s]);
    assert!(eval.starts_with("accuracy="), "{eval}");
    let cue = base(&["evaluate", "--checkpoint", ckpt_s, "--input", out.join("dataset/cue_conflict").to_str().unwrap()]);
    assert!(cue.contains("shape_bias_ratio="), "{cue}");

    let attack = base(&["attack-eval", "--checkpoint", ckpt_s, "--epsilon", "8/255", "--steps", "2", "--samples", "6"]);
    assert!(attack.contains("samples=6 robust_accuracy="), "{attack}");

    base(&["distort", "--input", test_s, "--kind", "contrast", "--level", "0.2"]);
    let distorted = fs::read_dir(out.join("distorted")).unwrap().next().unwrap().unwrap().path();
    let spec = base(&["spectrum", "--input", distorted.to_str().unwrap(), "--reference", test_s]);
    assert!(spec.contains("divergence total="), "{spec}");
    assert!(!spec.contains("divergence total=0 "));

    let preds = out.join("predictions-clean-r0.csv");
    let cmp = base(&["evaluate", "--compare", preds.to_str().unwrap(), preds.to_str().unwrap()]);
    assert!(cmp.contains("observed_equal=1 "), "{cmp}");

    let run_out = base(&["run"]);
    assert!(run_out.contains("(a)"), "{run_out}");
    let result = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("-result.json"))
        .unwrap();
    let again = tmp.path().join("again");
    let rep = shapeshift(&["report", "--result", result.to_str().unwrap(), "-o", again.to_str().unwrap()]);
    assert_eq!(code(&rep), 0);
    let name = result.file_name().unwrap().to_string_lossy().replace("-result.json", "-accuracy.csv");
    assert_eq!(fs::read(out.join(&name)).unwrap(), fs::read(again.join(&name)).unwrap());
    let trends = shapeshift(&["check-trends", "--result", result.to_str().unwrap()]);
    assert_eq!(code(&trends), 0);
}
