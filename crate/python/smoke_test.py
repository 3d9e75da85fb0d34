"""Smoke test for the pyseqcs extension module.

Build and install first:
    pip install maturin
    maturin develop -m crates/py/Cargo.toml
"""

import json
import math
import tempfile

import pyseqcs as sc


def main():
    a = [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]
    y = [1.0, 1.0]
    rep = sc.basis_pursuit(a, y)
    assert rep.status == "Optimal", rep
    assert abs(rep.objective - 1.0) < 1e-12
    assert rep.solution == [0.0, 0.0, 1.0]

    solver = sc.WarmStartSolver([[1.0, 1.0, 0.0]], [1.0])
    step = solver.add_row([0.0, 1.0, 1.0], 1.0)
    assert step.status == "Optimal" and solver.rows == 2
    assert abs(solver.objective - 1.0) < 1e-12

    assert abs(sc.chi2_cdf(2.0, 2) - (1.0 - math.exp(-1.0))) < 1e-12
    q = sc.chi2_quantile(0.1, 25)
    assert abs(sc.chi2_cdf(q, 25) - 0.1) < 1e-9

    cert = sc.chebyshev_bound(0.5, 100, 10, 3.0)
    assert abs(cert.upper_bound - 4.0) < 1e-12
    cert = sc.chi2_interval([0.0] * 8, alpha=0.1, noise_sigma=0.01)
    assert cert.upper_bound == 0.0 and cert.below_noise_floor

    res = sc.run_session(40, 4, rule="one-step-agreement", seed=7)
    assert res.reason == "one-step-agreement"
    assert res.final_error < 1e-6
    assert len(res.trace) == res.m_stop + 1

    try:
        sc.chi2_quantile(1.5, 3)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    assert "fig1" in sc.list_presets()
    with tempfile.TemporaryDirectory() as out:
        manifest = json.loads(sc.run_experiment("fig3", out))
        assert manifest["status"] == "complete"
        assert manifest["outputs"] == ["trace_0.csv"]

    print("pyseqcs smoke test passed")


if __name__ == "__main__":
    main()
