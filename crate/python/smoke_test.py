"""Smoke test for the shapeshift_py extension.

Uses an installed module if present (e.g. after `maturin develop` in
crates/python); otherwise loads the library from a `cargo build -p shapeshift-py`.
"""

import importlib
import json
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    try:
        return importlib.import_module("shapeshift_py")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libshapeshift_py.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "shapeshift_py.so")
            sys.path.insert(0, str(tmp))
            return importlib.import_module("shapeshift_py")
    sys.exit("shapeshift_py not found: run `cargo build -p shapeshift-py` first")


TINY = """
schema_version = 1
seed = 1
replicas = 1
output_dir = "{out}"

[dataset]
train_per_class = 8
test_per_class = 4
cue_conflict_count = 16

[[training]]
name = "clean"
epochs = 1

[[training]]
name = "linf"
epochs = 1
attack = {{ norm = "linf", epsilon = "4/255" }}

[[distortions]]
kind = "contrast"
levels = [1.0, 0.1]

[robust]
samples = 4
steps = 2
"""


def main():
    ss = load_module()

    ref = ss.reference_table()
    assert ref["R50"]["mean"] == 54.50 and ref["Humans"]["cue_conflict"] == 77.55

    a = [True] * 16 + [False] * 4
    b = [True] * 11 + [False] * 5 + [True, False, False, False]
    assert abs(ss.consistency(a, b)["kappa"] - 0.14 / 0.44) < 1e-12

    assert all(abs(x - y) < 1e-12 for x, y in zip(ss.project([3.0, 4.0], "l2", 0.5), [0.3, 0.4]))
    assert ss.condition_filtered_mean({"a": 0.5, "b": 0.7}, {"a": 0.1, "b": 0.9}) == 0.7
    try:
        ss.condition_filtered_mean({"a": 0.5}, {"a": 0.1}, threshold=1.0)
    except RuntimeError:
        pass
    else:
        raise AssertionError("expected an empty-filter error")

    img = ss.Image(3, 16, 16, [(i % 7) / 7 for i in range(768)])
    rotated = ss.distort(img, "rotation", 180.0)
    assert ss.distort(rotated, "rotation", 180.0).data() == img.data()
    profile = ss.dataset_profile([img])
    assert abs(sum(profile) - 1.0) < 1e-9
    assert ss.spectral_divergence(profile, profile)["total"] == 0.0

    with tempfile.TemporaryDirectory() as out:
        cfg = ss.ExperimentConfig.from_toml(TINY.format(out=out))
        data = ss.generate_dataset(cfg)
        assert len(data["train"]) == 64 and len(data["cue_conflict"]) == 16
        model, history = ss.train(cfg, "clean")
        assert len(history) == 1 and all(math.isfinite(v) for v in history[0])
        test = data["test"]
        images = [s.image for s in test]
        labels = [s.shape_label for s in test]
        assert len(model.predict(images)) == len(test)

        eps = 4 / 255
        adv = ss.pgd_attack(model, images, labels, "linf", eps, steps=3)
        for x, y in zip(images, adv):
            gap = max(abs(p - q) for p, q in zip(x.data(), y.data()))
            assert gap <= eps + 1e-9

        result = json.loads(ss.run(cfg))
        assert len(result["models"]) == 2
        checks = ss.check_trends(json.dumps(result))
        assert {c[0] for c in checks} >= {"a", "b", "c"}

        try:
            ss.ExperimentConfig.from_toml(TINY.format(out=out).replace('name = "clean"', 'name = "x"\nattack = { norm = "l2", epsilon = 0.1 }'))
        except ValueError:
            pass
        else:
            raise AssertionError("config without a clean entry must be rejected")

    print(f"shapeshift_py {ss.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
