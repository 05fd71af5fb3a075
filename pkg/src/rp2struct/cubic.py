"""Cubic differentials c dz^3, the endomorphism field A_g and the norm G^g.

Conventions: g = exp(2 phi)|dz|^2 with phi = 0.5*log(factor) + log(background
factor).  In complex notation A(X)Y = exp(-2 phi) * conj(c X Y), so that
g(A(X)Y, Z) = Re(c X Y Z).  The commutator identity
[A(X), A(Y)] Z = -G (g(Y,Z) X - g(X,Z) Y) then fixes G = 2 |c|^2 exp(-6 phi).
"""

from dataclasses import dataclass

import numpy as np

from . import mobius
from .io import check_version


class MetricError(ValueError):
    """Conformal factor is not positive."""


@dataclass(eq=False)
class CubicDifferential:
    coeff: np.ndarray

    def __post_init__(self):
        self.coeff = np.asarray(self.coeff, dtype=complex)

    @classmethod
    def constant(cls, surface, c):
        return cls(np.full(surface.n, complex(c)))

    @classmethod
    def zero(cls, surface):
        return cls(np.zeros(surface.n, dtype=complex))

    def to_json(self):
        return {"version": "cubic/1", "coeff_re": self.coeff.real.tolist(),
                "coeff_im": self.coeff.imag.tolist()}

    @classmethod
    def from_json(cls, doc):
        check_version(doc, "cubic/1")
        return cls(np.asarray(doc["coeff_re"]) + 1j * np.asarray(doc["coeff_im"]))


def _coeff(w):
    return w.coeff if isinstance(w, CubicDifferential) else np.asarray(w, dtype=complex)


def log_metric_factor(surface, g=None):
    """phi with g = exp(2 phi)|dz|^2, from a positive conformal factor relative to g0."""
    base = surface.log_conformal(surface.zpos)
    if g is None:
        return base
    g = np.broadcast_to(np.asarray(g, dtype=float), base.shape)
    if np.any(~(g > 0)):
        raise MetricError("conformal factor must be positive")
    return base + 0.5 * np.log(g)


def conj_linear_matrix(alpha):
    """Real matrix of w -> alpha * conj(w)."""
    alpha = np.asarray(alpha, dtype=complex)
    p, q = alpha.real, alpha.imag
    return np.stack([np.stack([p, q], -1), np.stack([q, -p], -1)], -2)


def a_from_phi(c, phi):
    """A(e_k) as real 2x2 matrices, shape (n, 2, 2, 2) indexed [v, k, i, j]."""
    c = np.asarray(c, dtype=complex)
    scale = np.exp(-2 * np.asarray(phi))
    a1 = conj_linear_matrix(scale * np.conj(c))
    a2 = conj_linear_matrix(scale * np.conj(1j * c))
    return np.stack([a1, a2], axis=-3)


def a_operator(surface, g, w):
    """Directional endomorphisms (A(e1), A(e2)) of the cubic differential ``w``."""
    return a_from_phi(_coeff(w), log_metric_factor(surface, g))


def norm_G(surface, g, w):
    phi = log_metric_factor(surface, g)
    return 2.0 * np.abs(_coeff(w)) ** 2 * np.exp(-6 * phi)


def cubic_form(c, x, y, z):
    """Re(c X Y Z) for real chart vectors."""
    xc, yc, zc = (mobius.to_complex(v) for v in (x, y, z))
    return np.real(np.asarray(c) * xc * yc * zc)


def d_nabla(surface, t, christoffel):
    """Exterior covariant derivative (d^nabla T)(e1, e2) of an End-valued 1-form.

    ``t[v, k] = T(e_k)``; the connection acts by commutators, and the
    torsion-free terms cancel.
    """
    der = surface.stencil_derivatives(t, push=lambda a, a2, x: mobius.push_form_endomorphism(a, x))
    d1t2 = der[0][:, 1]
    d2t1 = der[1][:, 0]
    g1, g2 = christoffel[:, 0], christoffel[:, 1]
    t1, t2 = t[:, 0], t[:, 1]
    return d1t2 - d2t1 + (g1 @ t2 - t2 @ g1) - (g2 @ t1 - t1 @ g2)


def holomorphicity_residual(surface, g, w):
    """max |d^nabla A| over vertices, measured in orthonormal frames."""
    from .connection import conformal_christoffel, metric_log_gradient
    phi, dphi = metric_log_gradient(surface, g)
    a = a_from_phi(_coeff(w), phi)
    res = d_nabla(surface, a, conformal_christoffel(dphi))
    norm = np.linalg.norm(res, axis=(-2, -1)) * np.exp(-2 * phi)
    return float(norm.max())


def pointwise_norm(surface, g, w):
    """|w| in g-orthonormal units, sqrt(G / 2)."""
    return np.sqrt(0.5 * norm_G(surface, g, w))
