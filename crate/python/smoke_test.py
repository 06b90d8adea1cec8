"""Smoke test for the qa_py extension module.

Build and install first:

    pip install maturin
    pip install -e crates/py --no-build-isolation
    python python/smoke_test.py
"""

import json
import math

import qa_py


def exp(rate):
    return {"family": "exponential", "params": {"rate": rate}}


def model(lam, mus):
    return json.dumps(
        {"arrival": {"kind": "single", "law": exp(lam)}, "services": [exp(m) for m in mus]}
    )


def main():
    # xi for Exp(1): 1 - e^theta when untruncated.
    law = json.dumps(exp(1.0))
    for theta in (-0.5, 0.0, 0.5):
        assert abs(qa_py.xi_limit(law, theta) + math.expm1(theta)) < 1e-9

    mm2 = model(0.7, [0.5, 0.5])
    d = qa_py.solve_alpha(mm2)
    assert abs(d["alpha"] - math.log(10 / 7)) < 1e-9, d
    assert d["regime"] == "ExactAsymptotic", d

    assert abs(qa_py.ht_limit_rate(model(1.0, [1.0])) - 1.0) < 1e-12

    pmf = qa_py.stationary_pmf(mm2, 200_000, 7)
    assert abs(sum(pmf) - 1.0) < 1e-9
    assert pmf == qa_py.stationary_pmf(mm2, 200_000, 7)

    r = qa_py.tail_estimate(model(1.0, [1.0, 1.0]), 8, 200_000, 3)
    assert abs(r["estimate"] - 0.5**6) <= 4 * r["se"], r

    try:
        qa_py.solve_alpha(model(1.5, [0.5, 0.5]))
    except ValueError as e:
        assert "unstable" in str(e)
    else:
        raise AssertionError("unstable model accepted")

    print(f"qa_py smoke test passed: alpha={d['alpha']:.6f}")


if __name__ == "__main__":
    main()
