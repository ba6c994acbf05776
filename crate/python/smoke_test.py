"""Smoke test for the hybridgen_py extension module.

Build and install it first:

    pip install --no-build-isolation ./crates/python
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

import hybridgen_py as hg

sys.path.insert(0, os.path.dirname(__file__))
import coeffio  # noqa: E402

GOLDEN = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "data", "golden_coeffs.hgmc")


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL {what}")
    print(f"ok   {what}")


def main():
    real = hg.synth_garments(120, 3)
    check(real.shape == (120, 28, 28), "synthetic garments shape")
    check(len(real.dwt_features()[0]) == 768, "DWT feature length 768 for 28x28")

    pre = "logit:0.001:1"
    train = real.preprocess(pre)
    basis = hg.Basis.fit(train, "pca:16")
    coeffs = basis.project(train.rows())
    check(len(coeffs) == 120 and len(coeffs[0]) == 16, "PCA projection shape")

    gmm = hg.Gmm.fit(coeffs, 2, seed=1)
    log = gmm.fit_log
    check(all(b >= a - 1e-9 for a, b in zip(log, log[1:])), "EM log-likelihood monotone")
    check(abs(sum(gmm.weights) - 1.0) < 1e-12, "mixture weights sum to one")
    samples = gmm.sample(100, seed=2)
    check(samples == gmm.sample(100, seed=2), "sampling is seeded")

    generated = basis.to_images(samples, 28, 28, pre, "pca16-gmm")
    check(generated.domain == "unit", "generated images back in [0,1]")

    view = real.evaluation_view(pre)
    reference = hg.Reference.fit(view, k=2)
    mean, nll = reference.dwt_entropy(view)
    check(math.isfinite(mean) and len(nll) == 120, "DWT entropy of the real set")
    check(hg.l1_distance(nll, nll) < 1e-12, "l1 distance of identical arrays")
    report = reference.evaluate(view, generated, model_id="pca16-gmm", basis_id=basis.id, kde_reduce=10)
    fields = dict(line.split("=", 1) for line in report.splitlines())
    check(fields["basis_id"] == "pca16" and "dwt_entropy" in fields, "benchmark report fields")

    kde = hg.Kde.fit([[x / 10.0] for x in range(-30, 31)])
    check(kde.bandwidth > 0 and math.isfinite(kde.logpdf([0.0])), "KDE fit and logpdf")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "c.hgmc")
        hg.write_coeffs(path, coeffs, basis_id=basis.id, dataset_id=real.id, metadata={"seed": "1"})
        kind, rows, cols, values, md = coeffio.read(path)
        check((kind, rows, cols) == (1, 120, 16), "pure-Python reader sees the Rust header")
        check(values[:16] == coeffs[0] and md["basis_id"] == "pca16", "pure-Python reader sees the Rust payload")

        back, md2 = hg.read_coeffs(path)
        check(back == coeffs and md2["seed"] == "1", "coefficient container roundtrip")

        py_path = os.path.join(d, "py.hgmc")
        coeffio.write(py_path, 1, rows, cols, values, md)
        with open(py_path, "rb") as f1, open(path, "rb") as f2:
            check(f1.read() == f2.read(), "Python and Rust encoders agree byte for byte")

        basis.save(os.path.join(d, "basis"))
        check(hg.Basis.load(os.path.join(d, "basis")).project(train.rows()) == coeffs, "basis save/load")

    golden_rows, golden_md = hg.read_coeffs(GOLDEN)
    _, _, _, golden_values, _ = coeffio.read(GOLDEN)
    flat = [v for r in golden_rows for v in r]
    check([math.copysign(1, v) for v in flat] == [math.copysign(1, v) for v in golden_values]
          and flat == golden_values and golden_md["basis_id"] == "ica400", "golden container")

    try:
        reference.evaluate(view, hg.synth_garments(20, 1).head(5).preprocess("none"))
    except ValueError as e:
        check("10 values" in str(e) or "at least" in str(e), "too few generated samples rejected")
    else:
        raise SystemExit("FAIL expected a ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
