"""Builds the extension module, imports it and exercises the main entry points.

Run from anywhere: python3 python/smoke_test.py
"""

import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "crates", "cli", "tests", "fixtures")


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "abduct-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    target = os.environ.get("CARGO_TARGET_DIR", os.path.join(ROOT, "target"))
    lib = os.path.join(target, "debug", "libabduct.so")
    dest = tempfile.mkdtemp()
    shutil.copy(lib, os.path.join(dest, "abduct.so"))
    sys.path.insert(0, dest)
    import abduct

    return abduct


def main():
    abduct = build_and_import()

    assert abduct.rearrange_groups([1, 1, 0, 0]) == [[0, 2, 3], [1, 2, 3]]

    probs = abduct.grouped_softmax([1.0, 0.0, -1.0], [1, 1, 0])
    assert abs(probs[0] - math.e / (math.e + math.exp(-1))) < 1e-12

    loss, grad = abduct.sample_loss([0.0, 0.0], [1, 0], gamma=0.0, alpha=0.5, eps=0.0)
    assert abs(loss - math.log(2)) < 1e-12
    assert len(grad) == 2

    assert abduct.auc([0.9, 0.1, 0.5], [1, 0, 0]) == 1.0
    assert abduct.accuracy([([0.1, 0.7], [0, 1]), ([0.3, 0.2], [0, 1])]) == 0.5

    samples = abduct.load_samples(
        os.path.join(FIXTURES, "train.jsonl"), os.path.join(FIXTURES, "train-labels.lst")
    )
    assert len(samples) == 10 and all(s.is_trainable() for s in samples)
    assert samples[0].triads()[0].startswith("[CLS] ")

    enc = abduct.ToyEncoder(0, 16)
    feats = enc.encode_sample(samples[0])
    assert len(feats) == 2 and len(feats[0]) == 16

    model = abduct.BiLstm(16, seed=3)
    scores = model.score(feats)
    assert len(scores) == 2
    assert len(model.gradient(feats, [1.0, 0.0])) == model.num_values()

    model, log = abduct.train(samples, epochs=2, dim=16)
    assert len(log) == 20
    report = abduct.evaluate(model, samples)
    assert 0.0 <= report["acc"] <= 1.0 and 0.0 <= report["auc"] <= 1.0

    path = os.path.join(tempfile.mkdtemp(), "ckpt.json")
    model.save(path)
    again = abduct.BiLstm.load(path)
    assert again.values() == model.values()

    try:
        abduct.sample_loss([0.0, 0.0], [1, 1])
    except ValueError:
        pass
    else:
        raise AssertionError("all-correct labels should be rejected")

    print("python smoke test ok")


if __name__ == "__main__":
    main()
