"""Connections on TS and on TS + L, flatness residuals and pointwise algebra.

Array conventions (all in chart coordinates at representative vertices):

* connection: ``gamma[v, k, i, j] = Gamma^i_{kj}``, i.e. ``gamma[v, k]`` is the
  matrix of Y -> nabla_{e_k} Y - d_{e_k} Y;
* E-connection: ``omega[v, k]`` is the 3x3 matrix of nabla_{e_k} - d_{e_k} in
  the frame (e1, e2, s);
* endomorphism / bilinear fields: ``(n, 2, 2)``; E-valued 1-forms ``(n, 2, 3)``.
"""

import numpy as np

from . import mobius
from .cubic import log_metric_factor

J0 = np.array([[0.0, -1.0], [1.0, 0.0]])


class InvalidInput(ValueError):
    """Input violates an algebraic precondition."""


class NotImmersed(ValueError):
    """Section is degenerate (its derivatives do not span a complement)."""


# ---------------------------------------------------------------------------
# pushforward rules for the stencil machinery

def _push_endo(a, a2, x):
    return mobius.push_endomorphism(a, x)


def _push_bilinear(a, a2, x):
    return mobius.push_bilinear(a, x)


def _push_gamma(a, a2, x):
    return mobius.push_christoffel(a, a2, x)


def _push_econn(a, a2, x):
    return mobius.push_econnection(a, a2, x)


def _push_section(a, a2, x):
    return mobius.push_section(a, x)


def _push_section_form(a, a2, x):
    return mobius.push_section_form(a, x)


def _push_density(a, a2, x):
    return x / np.abs(a) ** 2


def partials(surface, field, push):
    """First partials ``(d1, d2)`` of a field through the chart-aware stencils."""
    der = surface.stencil_derivatives(field, push=push)
    return der[0], der[1]


# ---------------------------------------------------------------------------
# basic connections


def conformal_christoffel(dphi):
    """Levi-Civita coefficients of exp(2 phi)|dz|^2 from the gradient of phi."""
    dphi = np.asarray(dphi, dtype=float)
    eye = np.eye(2)
    return (np.einsum("nk,ij->nkij", dphi, eye)
            + np.einsum("nj,ik->nkij", dphi, eye)
            - np.einsum("kj,ni->nkij", eye, dphi))


def metric_log_gradient(surface, g=None):
    """(phi, dphi) of the metric g * g0, background part differentiated exactly."""
    phi = log_metric_factor(surface, g)
    dphi = surface.dlog_conformal(surface.zpos)
    if g is not None:
        dphi = dphi + surface.gradient(phi - surface.log_conformal(surface.zpos))
    return phi, dphi


def levi_civita(surface, g=None):
    """Levi-Civita connection of g * g0 (``g`` a positive conformal factor)."""
    _, dphi = metric_log_gradient(surface, g)
    return conformal_christoffel(dphi)


def torsion(gamma):
    """Gamma(e1)e2 - Gamma(e2)e1."""
    return gamma[:, 0, :, 1] - gamma[:, 1, :, 0]


def curvature(surface, gamma):
    """R(e1, e2) = d1 Gamma2 - d2 Gamma1 + [Gamma1, Gamma2]."""
    d1, d2 = partials(surface, gamma, _push_gamma)
    g1, g2 = gamma[:, 0], gamma[:, 1]
    return d1[:, 1] - d2[:, 0] + g1 @ g2 - g2 @ g1


def econn_curvature(surface, omega):
    d1, d2 = partials(surface, omega, _push_econn)
    w1, w2 = omega[:, 0], omega[:, 1]
    return d1[:, 1] - d2[:, 0] + w1 @ w2 - w2 @ w1


def covariant_bilinear(surface, gamma, h):
    """(nabla_k h)_{jl} = d_k h_jl - Gamma^m_kj h_ml - Gamma^m_kl h_jm."""
    d1, d2 = partials(surface, h, _push_bilinear)
    dh = np.stack([d1, d2], axis=1)
    return (dh - np.einsum("nkmj,nml->nkjl", gamma, h)
            - np.einsum("nkml,njm->nkjl", gamma, h))


def covariant_endomorphism(surface, gamma, e):
    """nabla_k E = d_k E + [Gamma_k, E]."""
    d1, d2 = partials(surface, e, _push_endo)
    de = np.stack([d1, d2], axis=1)
    return de + gamma @ e[:, None] - e[:, None] @ gamma


def d_nabla_endomorphism(surface, gamma, e):
    """(d^nabla E)(e1, e2) for E viewed as a TS-valued 1-form."""
    ne = covariant_endomorphism(surface, gamma, e)
    return ne[:, 0, :, 1] - ne[:, 1, :, 0] + np.einsum("nij,nj->ni", e, torsion(gamma))


def covariant_density(surface, gamma, rho):
    """(nabla_k vol)(e1, e2) for vol = rho dx^dy."""
    d1, d2 = partials(surface, rho, _push_density)
    tr = np.trace(gamma, axis1=-2, axis2=-1)
    return np.stack([d1, d2], axis=1) - rho[:, None] * tr


def _sup(x, weight=None):
    """Sup over vertices of the Frobenius norm, optionally rescaled per vertex."""
    x = np.asarray(x)
    norms = np.abs(x) if x.ndim <= 1 else np.linalg.norm(x.reshape(len(x), -1), axis=1)
    if weight is not None:
        norms = norms * weight
    return float(norms.max()) if norms.size else 0.0


def _weight(surface, degree):
    """Converts a chart-coordinate tensor norm into background orthonormal units."""
    if surface.k0 == 0:
        return None
    return np.exp(-degree * surface.log_conformal(surface.zpos))


# ---------------------------------------------------------------------------
# Condition (E)


def build_nabla_h(surface, gamma, h):
    """Coefficients of nabla^h_X(Z, l) = (nabla_X Z + l X, dl(X) + h(Z, X))."""
    gamma = np.asarray(gamma, dtype=float)
    h = np.asarray(h, dtype=float)
    scale = max(1.0, float(np.abs(h).max()))
    if np.abs(h - np.swapaxes(h, -1, -2)).max() > 1e-10 * scale:
        raise InvalidInput("h must be symmetric")
    n = len(h)
    omega = np.zeros((n, 2, 3, 3))
    omega[:, :, :2, :2] = gamma
    for k in range(2):
        omega[:, k, k, 2] = 1.0
        omega[:, k, 2, :2] = h[:, :, k]
    return omega


def condition_E_residual(surface, gamma, h):
    """Sup norms of the torsion/symmetry defect, the Codazzi form and the curvature equation."""
    gamma = np.asarray(gamma, dtype=float)
    h = np.asarray(h, dtype=float)
    r_sym = max(_sup(torsion(gamma), _weight(surface, 1)),
                _sup(h - np.swapaxes(h, -1, -2), _weight(surface, 2)))
    nh = covariant_bilinear(surface, gamma, h)
    codazzi = nh[:, 0, 1, :] - nh[:, 1, 0, :]
    curv = curvature(surface, gamma).copy()
    curv[:, 0, :] += h[:, 1, :]
    curv[:, 1, :] -= h[:, 0, :]
    return {"r_sym": r_sym, "r_codazzi": _sup(codazzi, _weight(surface, 3)),
            "r_curv": _sup(curv, _weight(surface, 2))}


# ---------------------------------------------------------------------------
# sections of TS + L


def _nabla_section(surface, omega, u):
    d1, d2 = partials(surface, u, _push_section)
    du = np.stack([d1, d2], axis=1)
    return du + np.einsum("nkij,nj->nki", omega, u)


def s_u_and_nabla_u(surface, omega, u, tol=1e-10):
    """Split nabla_k nabla_l u = S_u(e_k, e_l) u + nabla_{nabla^u_k e_l} u.

    Returns ``(S_u, gamma_u)``.
    """
    u = np.asarray(u, dtype=float)
    v = _nabla_section(surface, omega, u)
    frame = np.stack([v[:, 0], v[:, 1], u], axis=-1)
    det = np.linalg.det(frame)
    size = np.linalg.norm(v[:, 0], axis=-1) * np.linalg.norm(v[:, 1], axis=-1) * np.linalg.norm(u, axis=-1)
    bad = np.nonzero(np.abs(det) <= tol * np.maximum(size, 1e-300))[0]
    if len(bad):
        raise NotImmersed(f"section is not immersed at vertex {int(bad[0])}")
    d1, d2 = partials(surface, v, _push_section_form)
    dv = np.stack([d1, d2], axis=1)
    second = dv + np.einsum("nkij,nlj->nkli", omega, v)
    coeff = np.linalg.solve(frame[:, None, None], second[..., None])[..., 0]
    s_u = coeff[..., 2]
    gamma_u = np.moveaxis(coeff[..., :2], -1, 2)
    return s_u, gamma_u


def rescale_laws_check(surface, omega, u, f):
    """Residuals of S_{u/f} = S_u - Hess^u f / f and the matching connection law."""
    u = np.asarray(u, dtype=float)
    f = np.broadcast_to(np.asarray(f, dtype=float), (surface.n,)).copy()
    if np.any(f <= 0):
        raise InvalidInput("f must be positive")
    s_u, g_u = s_u_and_nabla_u(surface, omega, u)
    s_f, g_f = s_u_and_nabla_u(surface, omega, u / f[:, None])
    df = surface.gradient(f)
    hess = surface.coordinate_hessian(f) - np.einsum("nkij,ni->nkj", g_u, df)
    r_s = _sup(s_f - (s_u - hess / f[:, None, None]))
    eye = np.eye(2)
    expected = (g_u - np.einsum("nk,ij->nkij", df, eye) / f[:, None, None, None]
                - np.einsum("nj,ik->nkij", df, eye) / f[:, None, None, None])
    return {"r_S": r_s, "r_conn": _sup(g_f - expected)}


# ---------------------------------------------------------------------------
# complex structures, duality and the order-4 map


def _check_complex_structure(j, tol=1e-8):
    j = np.asarray(j, dtype=float)
    err = np.abs(j @ j + np.eye(2)).max()
    if err > tol:
        raise InvalidInput(f"J^2 != -1 (defect {err:.3g})")
    return j


def conformal_j(n):
    return np.broadcast_to(J0, (n, 2, 2)).copy()


def dual_connection(surface, gamma, j):
    """The connection X, Y -> -J nabla_X(J Y).

    The derivative of J is projected onto its J-anticommuting part (the
    continuum identity J dJ + dJ J = 0), which makes the map an exact
    involution on the discrete data.
    """
    j = _check_complex_structure(np.broadcast_to(j, (surface.n, 2, 2)))
    d1, d2 = partials(surface, j, _push_endo)
    dj = np.stack([d1, d2], axis=1)
    jj = j[:, None]
    dj = 0.5 * (dj + jj @ dj @ jj)
    return -jj @ gamma @ jj - jj @ dj


def j_symmetry(surface, gamma, j, a):
    """(nabla, J, A) -> (-J nabla J, J, J A)."""
    j = _check_complex_structure(np.broadcast_to(j, (surface.n, 2, 2)))
    a = np.asarray(a, dtype=float)
    if np.abs(a @ j + j @ a).max() > 1e-8 * max(1.0, np.abs(a).max()):
        raise InvalidInput("A must anticommute with J")
    return dual_connection(surface, gamma, j), j.copy(), j @ a


def condition_HIJ_residual(surface, gamma, vol, j, j1=None, a=None):
    """Residuals of conditions (H), and (I) when ``j1`` or (J) when ``a`` is given.

    ``vol`` is the density rho of the volume form rho dx^dy.
    """
    j = _check_complex_structure(np.broadcast_to(j, (surface.n, 2, 2)))
    vol = np.broadcast_to(np.asarray(vol, dtype=float), (surface.n,)).copy()
    out = {
        "torsion": _sup(torsion(gamma), _weight(surface, 1)),
        "nabla_vol": _sup(covariant_density(surface, gamma, vol), _weight(surface, 3)),
        "d_nabla_J": _sup(d_nabla_endomorphism(surface, gamma, j), _weight(surface, 1)),
        "curvature": _sup(curvature(surface, gamma) @ j - vol[:, None, None] * np.eye(2),
                          _weight(surface, 2)),
    }
    if j1 is not None:
        j1 = _check_complex_structure(np.broadcast_to(j1, (surface.n, 2, 2)))
        out["d_nabla_JJ1"] = _sup(d_nabla_endomorphism(surface, gamma, j @ j1), _weight(surface, 1))
    if a is not None:
        a = np.broadcast_to(np.asarray(a, dtype=float), (surface.n, 2, 2))
        out["d_nabla_A"] = _sup(d_nabla_endomorphism(surface, gamma, a), _weight(surface, 1))
        out["AJ_plus_JA"] = _sup(a @ j + j @ a)
    return out


def blaschke_residual(surface, gamma, g, b, vol=None, j=None):
    """Residuals of the system on (nabla, omega, J, B) for a locally convex surface.

    By default J is the rotation of the conformal chart and omega = -vol_g
    (the orientation for which the curvature line matches Condition (E)).
    """
    phi = log_metric_factor(surface, g)
    rho = np.exp(2 * phi)
    vol = -rho if vol is None else np.broadcast_to(np.asarray(vol, dtype=float), (surface.n,))
    j = conformal_j(surface.n) if j is None else _check_complex_structure(j)
    b = np.broadcast_to(np.asarray(b, dtype=float), (surface.n, 2, 2))
    curv = curvature(surface, gamma) + vol[:, None, None] * (b @ j)
    return {
        "torsion": _sup(torsion(gamma), _weight(surface, 1)),
        "nabla_vol": _sup(covariant_density(surface, gamma, np.asarray(vol, dtype=float)),
                          _weight(surface, 3)),
        "trace_BJ": _sup(np.trace(b @ j, axis1=-2, axis2=-1)),
        "d_nabla_J": _sup(d_nabla_endomorphism(surface, gamma, j), _weight(surface, 1)),
        "d_nabla_B": _sup(d_nabla_endomorphism(surface, gamma, b), _weight(surface, 1)),
        "curvature": _sup(curv, _weight(surface, 2)),
    }


# ---------------------------------------------------------------------------
# convex 1-forms


def convex_form(surface, omega, alpha, transverse=None, theta=1e-6):
    """h_alpha(X, Y) = pi(nabla_X alpha(Y)) modulo alpha(TS).

    The quotient line is identified with R via the functional vanishing on
    alpha(TS) and equal to 1 on ``transverse`` (default: the L direction).
    Returns ``(h, is_convex)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    sv = np.linalg.svd(alpha, compute_uv=False)
    bad = np.nonzero(sv[:, -1] <= 1e-12 * np.maximum(sv[:, 0], 1e-300))[0]
    if len(bad):
        raise InvalidInput(f"alpha is not injective at vertex {int(bad[0])}")
    xi = np.broadcast_to(np.array([0.0, 0.0, 1.0]) if transverse is None else transverse,
                         (surface.n, 3))
    nu = np.cross(alpha[:, 0], alpha[:, 1])
    scale = np.einsum("ni,ni->n", nu, xi)
    if np.any(np.abs(scale) < 1e-14):
        raise InvalidInput("transverse direction lies in alpha(TS)")
    nu = nu / scale[:, None]
    d1, d2 = partials(surface, alpha, _push_section_form)
    dal = np.stack([d1, d2], axis=1) + np.einsum("nkij,nlj->nkli", omega, alpha)
    h = np.einsum("ni,nkli->nkl", nu, dal)
    sym = 0.5 * (h + np.swapaxes(h, -1, -2))
    lam0 = np.exp(-2 * surface.log_conformal(surface.zpos))
    eig = np.linalg.eigvalsh(sym * lam0[:, None, None])
    definite = (eig[:, 0] > theta) | (eig[:, 1] < -theta)
    return h, bool(np.all(definite))


# ---------------------------------------------------------------------------
# pointwise Pick / Q3 identity


def _orthonormal_frame(g):
    w, v = np.linalg.eigh(g)
    return v @ (v.swapaxes(-1, -2) / np.sqrt(w)[..., :, None])


def pick_q3_check(g, a_dir, tol=1e-9):
    """max |12 g(A(X)Y, Z) - Re Q3(X, Y, Z)| over basis triples of g-orthonormal frames.

    ``g``: (n, 2, 2) metric, ``a_dir``: (n, 2, 2, 2) with ``a_dir[:, k] = A(e_k)``.
    """
    g = np.asarray(g, dtype=float)
    a_dir = np.asarray(a_dir, dtype=float)
    f = _orthonormal_frame(g)
    finv = np.linalg.inv(f)
    conj = finv[:, None] @ a_dir @ f[:, None]
    a_on = np.einsum("nlk,nlij->nkij", f, conj)
    scale = max(1.0, float(np.abs(a_on).max()))
    failed = []
    if np.abs(a_on - np.swapaxes(a_on, -1, -2)).max() > tol * scale:
        failed.append("symmetric")
    if np.abs(np.trace(a_on, axis1=-2, axis2=-1)).max() > tol * scale:
        failed.append("trace-free")
    if np.abs(a_on @ J0 + J0 @ a_on).max() > tol * scale:
        failed.append("anticommutes with J")
    cub = np.einsum("nkij->nkji", a_on)  # cub[n, x, z, y] = g(A(e_x) e_y, e_z)
    if np.abs(cub - np.swapaxes(cub, 1, 3)).max() > tol * scale:
        failed.append("totally symmetric")
    if failed:
        raise InvalidInput("A violates: " + ", ".join(failed))

    def big(x):
        m = np.zeros((len(a_on), 3, 3))
        m[:, :2, :2] = np.einsum("k,nkij->nij", x, a_on)
        m[:, :2, 2] = x
        m[:, 2, :2] = x
        return m

    def tr3(x, y, z):
        return np.trace(big(x) @ big(y) @ big(z), axis1=-2, axis2=-1)

    basis = np.eye(2)
    res = 0.0
    for x, y, z in np.ndindex(2, 2, 2):
        ex, ey, ez = basis[x], basis[y], basis[z]
        jx, jy, jz = J0 @ ex, J0 @ ey, J0 @ ez
        q3 = tr3(ex, ey, ez) - tr3(ex, jy, jz) - tr3(jx, ey, jz) - tr3(jx, jy, ez)
        lhs = 12 * np.einsum("nij,i,j->n", a_on[:, x], ez, ey)
        res = max(res, float(np.abs(lhs - q3).max()))
    return res


# ---------------------------------------------------------------------------
# structure container


class StructureData:
    """A candidate Blaschke pair (nabla, g = exp(2 mu) g0) with its derived fields.

    ``h`` defaults to g, and ``omega`` holds the coefficients of nabla^h.
    """

    def __init__(self, surface, mu, gamma, h=None, residuals=None):
        self.surface = surface
        self.mu = np.broadcast_to(np.asarray(mu, dtype=float), (surface.n,)).copy()
        self.gamma = np.asarray(gamma, dtype=float)
        self.phi = self.mu + surface.log_conformal(surface.zpos)
        self.metric = np.exp(2 * self.phi)[:, None, None] * np.eye(2)
        self.h = self.metric.copy() if h is None else np.asarray(h, dtype=float)
        self.omega = build_nabla_h(surface, self.gamma, self.h)
        self.residuals = {} if residuals is None else dict(residuals)

    @property
    def levi_civita(self):
        return levi_civita(self.surface, np.exp(2 * self.mu))

    @property
    def difference(self):
        """A = nabla - (Levi-Civita of g)."""
        return self.gamma - self.levi_civita

    @property
    def dual_gamma(self):
        """Metric dual LC - A of the connection."""
        return 2 * self.levi_civita - self.gamma

    @property
    def volume_density(self):
        return np.exp(2 * self.phi)

    def econnection(self):
        from .developing import EConnection
        return EConnection.for_metric(self.surface, self.omega, self.mu)

    def condition_E(self):
        return condition_E_residual(self.surface, self.gamma, self.h)


def levi_civita_tensor(surface, g):
    """Levi-Civita connection of a general metric field ``g[v]`` (chart components)."""
    g = np.asarray(g, dtype=float)
    d1, d2 = partials(surface, g, lambda a, a2, x: mobius.push_bilinear(a, x))
    dg = np.stack([d1, d2], axis=1)  # dg[v, k, l, j] = d_k g_lj
    low = 0.5 * (np.einsum("nklj->nlkj", dg) + np.einsum("njlk->nlkj", dg)
                 - np.einsum("nlkj->nlkj", dg))
    # low[v, l, k, j] = 0.5 (d_k g_lj + d_j g_lk - d_l g_kj)
    return np.einsum("nil,nlkj->nkij", np.linalg.inv(g), low)


def conformal_structure(g):
    """Rotation by +pi/2 for the metric ``g``: g(JX, JY) = g(X, Y), positively oriented."""
    g = np.asarray(g, dtype=float)
    root = np.sqrt(np.linalg.det(g))
    j = np.empty_like(g)
    j[..., 0, 0] = -g[..., 0, 1]
    j[..., 0, 1] = -g[..., 1, 1]
    j[..., 1, 0] = g[..., 0, 0]
    j[..., 1, 1] = g[..., 0, 1]
    return j / root[..., None, None]
