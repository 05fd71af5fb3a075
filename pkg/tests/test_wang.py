import math
import time

import numpy as np
import pytest

from rp2struct import wang

from conftest import bump, genus2, order, torus


def manufactured(s, amp=0.2):
    """mu* = 0.3 + amp * bump and the exact right-hand side (radial Laplacian)."""
    R = 1.3
    d = s.distance(s.zpos, 0 * s.zpos)
    t = np.clip(1 - (d / R) ** 2, 0, None)
    du = -8 * d / R ** 2 * t ** 3
    d2u = 12 * t ** 2 * (2 * d / R ** 2) ** 2 - 8 / R ** 2 * t ** 3
    coth = np.where(d > 1e-12, 1 / np.tanh(np.maximum(d, 1e-12)), 0.0)
    lap = amp * np.where(d > 1e-12, d2u + du * coth, 2 * d2u)
    mu = 0.3 + amp * t ** 4
    return mu, -np.exp(4 * mu) * lap + wang.potential(mu, s.k0)


def torus_manufactured(t):
    x, y = t.pos.T
    k = 2 * np.pi
    mu = 0.3 + 0.02 * np.sin(k * x) * np.cos(k * y)
    lap = -2 * k * k * (mu - 0.3)
    return mu, -np.exp(4 * mu) * lap + np.exp(6 * mu)


def test_operator_constants():
    s = genus2(0)
    assert np.abs(wang.wang_operator(s, np.zeros(s.n))).max() < 1e-12
    assert np.abs(wang.wang_operator(s, np.full(s.n, 0.5 * math.log(2))) - 4).max() < 1e-12
    t = torus(8)
    assert np.abs(wang.wang_operator(t, np.full(t.n, math.log(5) / 6)) - 5).max() < 1e-12


def test_linearization_matches_finite_differences(rng):
    s = genus2(1)
    mu = 0.1 * rng.normal(size=s.n)
    lam = rng.normal(size=s.n)
    eps = 1e-4
    fd = (wang.wang_operator(s, mu + eps * lam) - wang.wang_operator(s, mu - eps * lam)) / (2 * eps)
    lin = wang.wang_linearization(s, mu, lam)
    assert np.abs(fd - lin).max() <= 1e-5 * np.abs(lin).max()
    assert np.abs(wang.wang_linearization(s, mu, np.zeros(s.n))).max() == 0


def test_linearization_at_zero():
    s = genus2(0)
    out = wang.wang_linearization(s, np.zeros(s.n), np.ones(s.n))
    assert np.abs(out - 2).max() < 1e-12


def test_constant_solution():
    s = genus2(1)
    f = math.exp(1.2) - math.exp(0.8)
    res = wang.solve_wang(s, np.full(s.n, f), tol=1e-12)
    assert np.abs(res.mu - 0.2).max() < 1e-10
    rep = wang.apriori_check(s, res.mu, f)
    assert rep["passed"]
    assert abs(rep["gap_at_min"]) < 1e-10 and abs(rep["gap_at_max"]) < 1e-10


def test_genus2_manufactured_recovery():
    errs = []
    for r in range(4):
        s = genus2(r)
        mu_star, f = manufactured(s)
        assert np.all(f > 0)
        res = wang.solve_wang(s, f)
        errs.append(np.abs(res.mu - mu_star).max())
        assert wang.apriori_check(s, res.mu, f)["passed"]
    assert np.all(order(errs) > 1.8)


def test_torus_manufactured_recovery():
    errs = []
    for n in (8, 16, 32):
        t = torus(n)
        mu_star, f = torus_manufactured(t)
        res = wang.solve_wang(t, f)
        errs.append(np.abs(res.mu - mu_star).max())
    assert np.all(order(errs) > 1.8)


def test_seeds_agree():
    s = genus2(2)
    _, f = manufactured(s)
    a = wang.solve_wang(s, f)
    b = wang.solve_wang(s, f, mu0=0.0)
    c = wang.solve_wang(s, f, mu0=1.0)
    assert np.abs(a.mu - b.mu).max() < 1e-7
    assert np.abs(a.mu - c.mu).max() < 1e-7


def test_corrupted_solution_fails_apriori():
    s = genus2(2)
    _, f = manufactured(s)
    res = wang.solve_wang(s, f)
    assert not wang.apriori_check(s, res.mu + 1.0, f)["passed"]


def test_domain_errors():
    s = genus2(1)
    f = np.ones(s.n)
    f[3] = -0.5
    with pytest.raises(wang.DomainError, match="f must be positive"):
        wang.solve_wang(s, f)
    t = torus(8)
    with pytest.raises(wang.DomainError):
        wang.solve_wang(t, np.zeros(t.n))


def test_zero_rhs_on_genus2():
    s = genus2(1)
    res = wang.solve_wang(s, np.zeros(s.n))
    assert np.abs(res.mu).max() < 1e-10


def test_runtime():
    s = genus2(3)
    _, f = manufactured(s)
    t0 = time.perf_counter()
    wang.solve_wang(s, f)
    assert time.perf_counter() - t0 < 60


def test_json_round_trip():
    s = genus2(0)
    res = wang.solve_wang(s, np.ones(s.n))
    back = wang.WangResult.from_json(res.to_json())
    assert np.array_equal(back.mu, res.mu)
    assert back.iters == res.iters
