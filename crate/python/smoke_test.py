"""Smoke test for the Python extension: build it with maturin, then run this file."""

import math

import double_tower_py as dt


def main() -> None:
    c = dt.constants(5)
    assert abs(c["A1"] - 337.744105905095) < 1e-9, c
    assert dt.crosscheck(5)["passed"]

    v = dt.Potential("bump_at", r0=1.0, v0=1.0, a=0.0, w=0.5)
    assert abs(v.value(1.0) - 1.0) < 1e-12
    assert abs(2.0 * v.value(1.0) + v.derivative(1.0)) < 1e-10

    cfg = dt.Configuration(5, 8, 1.0, 0.3, 200.0)
    centers = cfg.centers()
    assert len(centers) == 16 and len(centers[0]) == 5
    e = cfg.residual(v, [0.5, 0.1, 0.2, 0.0, 0.0])
    assert math.isfinite(e)
    f = cfg.reduced_energy(v)
    assert math.isclose(f["F"], sum(f["terms"].values()), rel_tol=1e-12)

    s = dt.lattice_sum(5, 400, 1.0, 0.01, 3.0)
    assert abs(s["exact"] / s["leading"] - 1.0) < 0.01

    p = dt.pair_interaction(5, 80.0)
    assert p["int_pow"] > 0.0

    cp = dt.solve_critical(5, 256, v)
    assert cp["h_rel_residual"] < 0.05 and cp["mu_rel_residual"] < 0.05

    try:
        dt.Configuration(3, 4, 1.0, 0.2, 10.0)
    except ValueError:
        pass
    else:
        raise AssertionError("N = 3 accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
