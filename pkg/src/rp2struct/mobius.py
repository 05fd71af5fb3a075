"""Mobius maps and the tensor transformation rules used at chart changes.

All charts are conformal (flat torus or Poincare disk), so a chart change
``w = M(z)`` has a complex derivative ``a = M'(z)`` and its real Jacobian is
the conformal matrix ``[[Re a, -Im a], [Im a, Re a]]``.
"""

import numpy as np

IDENTITY = np.eye(2, dtype=complex)


def apply(m, z):
    m = np.asarray(m)
    return (m[..., 0, 0] * z + m[..., 0, 1]) / (m[..., 1, 0] * z + m[..., 1, 1])


def derivative(m, z):
    m = np.asarray(m)
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return det / (m[..., 1, 0] * z + m[..., 1, 1]) ** 2


def second_derivative(m, z):
    m = np.asarray(m)
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return -2.0 * m[..., 1, 0] * det / (m[..., 1, 0] * z + m[..., 1, 1]) ** 3


def normalize(m):
    m = np.asarray(m, dtype=complex)
    det = np.linalg.det(m)
    return m / np.sqrt(det)[..., None, None]


def inverse(m):
    m = np.asarray(m, dtype=complex)
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out


def translation(b):
    return np.array([[1.0, b], [0.0, 1.0]], dtype=complex)


def same_map(m1, m2, tol=1e-9):
    """True if two matrices define the same Mobius map (projective equality)."""
    a = normalize(m1)
    b = normalize(m2)
    return bool(np.allclose(a, b, atol=tol) or np.allclose(a, -b, atol=tol))


def conformal_matrix(a):
    """Real 2x2 matrix of multiplication by the complex number(s) ``a``."""
    a = np.asarray(a, dtype=complex)
    out = np.empty(a.shape + (2, 2))
    out[..., 0, 0] = a.real
    out[..., 0, 1] = -a.imag
    out[..., 1, 0] = a.imag
    out[..., 1, 1] = a.real
    return out


def to_complex(v):
    v = np.asarray(v, dtype=float)
    return v[..., 0] + 1j * v[..., 1]


def to_real(z):
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1)


# Pushforward rules.  ``a`` is M'(p) and ``a2`` is M''(p) at the source point.

def push_vector(a, y):
    return np.einsum("...ij,...j->...i", conformal_matrix(a), y)


def push_covector(a, alpha):
    inv = conformal_matrix(1.0 / np.asarray(a, dtype=complex))
    return np.einsum("...ji,...j->...i", inv, alpha)


def push_endomorphism(a, e):
    d = conformal_matrix(a)
    dinv = conformal_matrix(1.0 / np.asarray(a, dtype=complex))
    return d @ e @ dinv


def push_bilinear(a, b):
    dinv = conformal_matrix(1.0 / np.asarray(a, dtype=complex))
    return np.swapaxes(dinv, -1, -2) @ b @ dinv


def push_form_endomorphism(a, t):
    """Pushforward of an End(TS)-valued 1-form stored as ``t[..., k, :, :] = T(e_k)``."""
    d = conformal_matrix(a)
    dinv = conformal_matrix(1.0 / np.asarray(a, dtype=complex))
    conj = d[..., None, :, :] @ t @ dinv[..., None, :, :]
    return np.einsum("...lk,...lij->...kij", dinv, conj)


def push_cubic(a, c):
    return np.asarray(c) / np.asarray(a, dtype=complex) ** 3


def push_christoffel(a, a2, gamma):
    """Pushforward of connection coefficients ``gamma[..., k, i, j] = Gamma^i_{kj}``.

    Gamma'(X') = D Gamma(D^-1 X') D^-1 - (d_{D^-1 X'} D) D^-1; for a holomorphic
    map the inhomogeneous part is multiplication by -M'' X' / M'^2.
    """
    a = np.asarray(a, dtype=complex)
    out = push_form_endomorphism(a, gamma)
    ratio = np.asarray(a2, dtype=complex) / a ** 2
    out[..., 0, :, :] -= conformal_matrix(ratio)
    out[..., 1, :, :] -= conformal_matrix(1j * ratio)
    return out


def gauge_blocks(a):
    """3x3 gauge ``diag(D, 1)`` acting on TS + L in coordinate frames."""
    a = np.asarray(a, dtype=complex)
    phi = np.zeros(a.shape + (3, 3))
    phi[..., :2, :2] = conformal_matrix(a)
    phi[..., 2, 2] = 1.0
    phiinv = np.zeros(a.shape + (3, 3))
    phiinv[..., :2, :2] = conformal_matrix(1.0 / a)
    phiinv[..., 2, 2] = 1.0
    return phi, phiinv


def push_section(a, u):
    phi, _ = gauge_blocks(a)
    return np.einsum("...ij,...j->...i", phi, u)


def push_section_form(a, v):
    """E-valued 1-form ``v[..., k, :] = v(e_k)`` under the coordinate-frame gauge."""
    phi, _ = gauge_blocks(a)
    dinv = conformal_matrix(1.0 / np.asarray(a, dtype=complex))
    w = np.einsum("...ij,...kj->...ki", phi, v)
    return np.einsum("...lk,...li->...ki", dinv, w)


def push_econnection(a, a2, omega):
    """Pushforward of E-connection coefficients ``omega[..., k, :, :]`` (coordinate frame)."""
    a = np.asarray(a, dtype=complex)
    phi, phiinv = gauge_blocks(a)
    dinv = conformal_matrix(1.0 / a)
    conj = phi[..., None, :, :] @ omega @ phiinv[..., None, :, :]
    out = np.einsum("...lk,...lij->...kij", dinv, conj)
    ratio = np.asarray(a2, dtype=complex) / a ** 2
    out[..., 0, :2, :2] -= conformal_matrix(ratio)
    out[..., 1, :2, :2] -= conformal_matrix(1j * ratio)
    return out
