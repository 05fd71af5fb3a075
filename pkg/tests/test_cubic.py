import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rp2struct import cubic
from rp2struct.connection import J0

from conftest import genus2, torus


def _frame_vectors(rng, k=3):
    return [rng.normal(size=2) for _ in range(k)]


def test_zero_differential():
    t = torus(8)
    w = cubic.CubicDifferential.zero(t)
    assert np.all(cubic.a_operator(t, None, w) == 0)
    assert np.all(cubic.norm_G(t, None, w) == 0)


def test_constant_real_c_on_flat_torus():
    t = torus(8)
    a = cubic.a_operator(t, None, cubic.CubicDifferential.constant(t, 0.7))
    a1, a2 = a[0, 0], a[0, 1]
    # Re(c dz^3): A(e1) = c diag(1, -1), A(e2) = c [[0, -1], [-1, 0]]
    assert np.allclose(a1, [[0.7, 0], [0, -0.7]], atol=1e-15)
    assert np.allclose(a2, [[0, -0.7], [-0.7, 0]], atol=1e-15)
    for m in (a1, a2):
        assert np.allclose(m @ J0 + J0 @ m, 0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1), st.integers(0, 10 ** 6))
def test_cubic_form_total_symmetry(re, im, logg, seed):
    rng = np.random.default_rng(seed)
    c = complex(re, im)
    a = cubic.a_from_phi(np.array([c]), np.array([logg]))[0]
    x, y, z = _frame_vectors(rng)
    g = np.exp(2 * logg)

    def form(p, q, r):
        return g * (np.einsum("k,kij,j->i", p, a, q) @ r)

    vals = [form(x, y, z), form(y, x, z), form(z, y, x), form(x, z, y)]
    assert np.ptp(vals) <= 1e-12 * max(1.0, abs(vals[0]))
    assert abs(vals[0] - cubic.cubic_form(c, x, y, z)) <= 1e-12 * max(1.0, abs(vals[0]))


def test_norm_scaling_under_metric_rescale():
    # G^{lambda g} = G^g / lambda^3
    s = genus2(0)
    w = cubic.CubicDifferential(np.linspace(0.1, 1.0, s.n) + 0.3j)
    base = cubic.norm_G(s, None, w)
    assert np.allclose(cubic.norm_G(s, 2.0, w), base / 8, rtol=1e-14, atol=0)


def test_commutator_identity(rng):
    # [A(X), A(Y)] Z = -G (g(Y, Z) X - g(X, Z) Y)
    for _ in range(20):
        c = complex(*rng.normal(size=2))
        phi = rng.normal()
        a = cubic.a_from_phi(np.array([c]), np.array([phi]))[0]
        G = 2 * abs(c) ** 2 * np.exp(-6 * phi)
        g = np.exp(2 * phi)
        x, y, z = _frame_vectors(rng)
        ax, ay = np.einsum("k,kij->ij", x, a), np.einsum("k,kij->ij", y, a)
        lhs = (ax @ ay - ay @ ax) @ z
        rhs = -G * (g * (y @ z) * x - g * (x @ z) * y)
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())


def test_metric_error():
    t = torus(8)
    with pytest.raises(cubic.MetricError):
        cubic.norm_G(t, -np.ones(t.n), cubic.CubicDifferential.zero(t))


def test_holomorphicity():
    errs_const, errs_bump = [], []
    for n in (8, 16, 32):
        t = torus(n)
        x, y = t.pos.T
        errs_const.append(cubic.holomorphicity_residual(t, None, cubic.CubicDifferential.constant(t, 1.0)))
        z = x + 1j * y - (0.5 + 0.5j)
        errs_bump.append(cubic.holomorphicity_residual(
            t, None, cubic.CubicDifferential(np.exp(-np.abs(z) ** 2))))
    assert max(errs_const) < 1e-12
    assert min(errs_bump) > 0.1
    assert abs(errs_bump[-1] - errs_bump[-2]) < 0.2 * errs_bump[-1]


def test_json_round_trip():
    t = torus(8)
    w = cubic.CubicDifferential(np.arange(t.n) * (0.1 + 0.2j))
    back = cubic.CubicDifferential.from_json(w.to_json())
    assert np.array_equal(back.coeff, w.coeff)
