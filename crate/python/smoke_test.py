"""Quick end-to-end check of the Python bindings.

    pip install -e crates/py --no-build-isolation
    python python/smoke_test.py
"""

import os
import random
import tempfile

import spnorm


def rand_tensor(shape, lo, hi, rng):
    n = 1
    for d in shape:
        n *= d
    return spnorm.Tensor(list(shape), [rng.uniform(lo, hi) for _ in range(n)])


def main():
    rng = random.Random(0)
    assert "sp-norm" in spnorm.norm_kinds()

    tiny = spnorm.SpNet("tiny")
    assert 28_000_000 <= tiny.param_count <= 42_000_000, tiny.param_count

    model = spnorm.SpNet("micro", seed=3)
    image = rand_tensor([1, 3, 32, 32], 0.0, 1.0, rng)
    sparse = spnorm.Tensor([1, 1, 32, 32], [rng.uniform(0.5, 10.0) if rng.random() < 0.3 else 0.0 for _ in range(1024)])
    depth = model.predict(image, sparse)
    assert depth.shape == [1, 1, 32, 32]

    rep = model.sp_report(image, sparse)
    assert rep["class"] == "proportional", rep
    assert max(rep["proportional_deviation"]) < 1e-9

    ledger = spnorm.sp_check()
    assert ledger["pass"], [r["variant"] for r in ledger["rows"] if not r["pass"]]

    grads = spnorm.gradcheck(include_model=False)
    assert grads["pass"], grads["worst"]

    mom = spnorm.moments(trials=2000, seed=1)
    assert mom["underpowered"]

    m, q = spnorm.product_moments((1.0, 2.0), (3.0, 0.5))
    assert m == 3.0 and abs(q - (2.0 * 0.5 + 0.5 + 9.0 * 2.0)) < 1e-12
    assert spnorm.spnorm_lambda(16, (0.0, 1.0 / 16), (0.0, 0.0)) == 1.0

    gt = rand_tensor([1, 1, 8, 8], 0.5, 10.0, rng)
    loss = spnorm.total_loss(gt, gt, spnorm.Tensor.full([1, 1, 8, 8], 1.0))
    assert loss["total"] == 0.0

    trained, report = spnorm.train(steps=2, batch_size=2, size=32, seed=5)
    assert report["status"]["status"] == "completed" and len(report["records"]) == 2

    oracle = spnorm.evaluate(None, scenes=2, size=32)
    assert all(r["rel"] == 0.0 for r in oracle["rows"])

    with tempfile.TemporaryDirectory() as d:
        ck = os.path.join(d, "m.json")
        trained.save(ck)
        back = spnorm.SpNet.load(ck)
        assert back.predict(image, sparse).tolist() == trained.predict(image, sparse).tolist()
        p = os.path.join(d, "depth.pfm")
        spnorm.write_pfm(p, spnorm.Tensor([1, 2, 2], [0.5, 1.0, 2.0, 4.0]))
        assert spnorm.read_pfm(p).tolist() == [0.5, 1.0, 2.0, 4.0]

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
