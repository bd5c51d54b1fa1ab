"""Smoke test for the Python bindings.

Build and install the module first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/noisy_sgd_privacy-*.whl

Then run ``python python/smoke_test.py`` (or ``pytest python/smoke_test.py``).
"""

import json
import math

import noisy_sgd_privacy as nsp


def params(**kw):
    base = dict(n=1000, b=10, lipschitz=1.0, diameter=1.0, eta=0.05, sigma=2.0, iterations=5000, smoothness=4.0)
    base.update(kw)
    return nsp.PrivacyParams(**base)


def test_kernels():
    assert math.isclose(nsp.gaussian_renyi(1.0, 2.0, 8.0), 1.0, rel_tol=1e-15)
    assert math.isclose(nsp.sgm_divergence(1.0, 2.0, 8.0), 1.0, rel_tol=1e-8)
    s = nsp.sgm_divergence(0.01, 2.0, 8.0)
    assert 0.0 < s < -math.log1p(-0.01)


def test_accounting():
    p = params()
    r = nsp.compute_epsilon(p, "noisy_sgd", 8.0, delta=1e-5)
    assert r["regime"] == "noisy_sgd" and r["branch"] in ("t_linear", "plateau")
    assert math.isclose(r["epsilon_dp"], r["epsilon"] + math.log(1e5) / 7.0, rel_tol=1e-12)

    curve = nsp.privacy_curve(p, "noisy_sgd", 8.0, [100, 10_000, 1_000_000, 10_000_000])
    eps = [row["epsilon"] for row in curve]
    assert eps == sorted(eps) and eps[-1] == eps[-2]

    sigma = nsp.solve_sigma(p, "noisy_sgd", 8.0, 0.5)
    assert nsp.compute_epsilon(p.with_sigma(sigma), "noisy_sgd", 8.0)["epsilon"] <= 0.5
    try:
        nsp.solve_sigma(p, "noisy_sgd", 8.0, 1e-40)
    except nsp.InfeasibleError:
        pass
    else:
        raise AssertionError("expected InfeasibleError")

    dp, alpha = nsp.best_dp(p, "noisy_sgd", 1e-5, [2.0, 4.0, 8.0, 16.0, 32.0])
    assert alpha in (2.0, 4.0, 8.0, 16.0, 32.0) and dp > 0

    again = nsp.PrivacyParams.from_json(p.to_json())
    assert json.loads(again.to_json()) == json.loads(p.to_json())


def test_validation():
    bad = params(eta=1.0)
    report = bad.validate()
    assert any("2/M" in v["message"] for v in report["violations"])
    try:
        nsp.compute_epsilon(bad, "noisy_sgd", 2.0)
    except ValueError as e:
        assert "2/M" in str(e)
    else:
        raise AssertionError("expected ValueError")


def test_sgd_and_audit():
    p = params(n=5, b=2, eta=0.1, sigma=0.5, iterations=30)
    a = nsp.run_noisy_sgd(p, seed=3)
    assert len(a["iterates"]) == 31 and all(abs(w[0]) <= 0.5 for w in a["iterates"])
    assert a == nsp.run_noisy_sgd(p, seed=3)
    problem = {
        "losses": [{"kind": "linear", "gradient": [1.0, 0.0]}] + [{"kind": "zero", "dim": 2}] * 4,
        "set": {"kind": "ball", "center": [0.0, 0.0], "radius": 0.5},
    }
    b = nsp.run_noisy_sgd(p, problem=json.dumps(problem), batches="cyclic")
    assert b["batch_log"][0] == [0, 1] and len(b["iterates"][0]) == 2

    walk = nsp.PrivacyParams(10, 1, 1.0, 1e3, 1.0, math.sqrt(2 / 15), 2000)
    report = nsp.audit(walk, 10_000, 0.1, 0.01, seed=3)
    assert report["verdict"] == "REFUTED" and report["dominance_violations"] == 0


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
