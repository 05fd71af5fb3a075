"""Determinant-type operators, their Newton solvers and cohomology normalizations.

Every operator here has the jet form

    value = c * f**p * det(M),  M = M0 + f Mf - R (d2 f - sum_m Gamma^m d_m f)

with per-vertex matrices, so one Newton engine serves all of them: the
partial derivatives with respect to the jet (f, fx, fy, fxx, fxy, fyy) come
from the adjugate and are chained through the sparse stencil matrices.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .connection import J0, s_u_and_nabla_u, partials, _push_section
from .io import check_version


class EllipticityError(ValueError):
    """Iterate left the set where the operator is elliptic."""


class DomainError(ValueError):
    """Target outside the admissible class."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


_E = [np.array([[1.0, 0.0], [0.0, 0.0]]),
      np.array([[0.0, 1.0], [1.0, 0.0]]),
      np.array([[0.0, 0.0], [0.0, 1.0]])]


def _adj(m):
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out


def _tr(a, b):
    return np.einsum("nij,nji->n", a, b)


@dataclass
class DetOperator:
    """value = c f^p det(M0 + f Mf - R Hess(f)) with Hess(f) = d2 f - Gamma^m d_m f.

    ``pd_metric`` P decides membership: sym(P M) must be positive definite.
    """
    surface: object
    m0: np.ndarray
    mf: np.ndarray
    r: np.ndarray
    gamma: np.ndarray
    c: np.ndarray
    p: int = 0
    pd_metric: np.ndarray = None
    name: str = "det"

    def jets(self, f):
        s = self.surface
        return [f, s.Dx @ f, s.Dy @ f, s.Dxx @ f, s.Dxy @ f, s.Dyy @ f]

    def hess(self, f):
        _, fx, fy, fxx, fxy, fyy = self.jets(f)
        h2 = np.stack([np.stack([fxx, fxy], -1), np.stack([fxy, fyy], -1)], -2)
        grad = np.stack([fx, fy], -1)
        return h2 - np.einsum("nkml,nm->nkl", self.gamma, grad)

    def matrix(self, f):
        f = np.asarray(f, dtype=float)
        return self.m0 + f[:, None, None] * self.mf - self.r @ self.hess(f)

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        return self.c * f ** self.p * np.linalg.det(self.matrix(f))

    def min_eigenvalue(self, f):
        m = self.matrix(f)
        if self.pd_metric is not None:
            m = self.pd_metric @ m
        return np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m, -1, -2)))[:, 0]

    def jacobian(self, f):
        f = np.asarray(f, dtype=float)
        s = self.surface
        m = self.matrix(f)
        adj = _adj(m)
        det = np.linalg.det(m)
        fp = f ** self.p
        d_f = self.c * (self.p * f ** (self.p - 1) * det if self.p else 0.0) + self.c * fp * _tr(adj, self.mf)
        parts = [sparse.diags(d_f)]
        ops = [s.Dx, s.Dy]
        for mm in range(2):
            dm = self.r @ self.gamma[:, :, mm, :]
            parts.append(sparse.diags(self.c * fp * _tr(adj, dm)) @ ops[mm])
        for e, op in zip(_E, [s.Dxx, s.Dxy, s.Dyy]):
            dm = -self.r @ e
            parts.append(sparse.diags(self.c * fp * _tr(adj, dm)) @ op)
        return sum(parts[1:], parts[0]).tocsc()

    def linearize(self, f, direction, normalized=False):
        """Gateaux derivative in ``direction``; divided by the value if ``normalized``."""
        out = self.jacobian(f) @ np.asarray(direction, dtype=float)
        return out / self(f) if normalized else out


# ---------------------------------------------------------------------------
# concrete operators


def _metric_hessian_parts(surface, gamma, metric):
    ginv = np.linalg.inv(metric)
    return ginv, gamma


def operator_Hmu_op(surface, b_mu, gamma, metric=None):
    """H_mu(f) = det(B_mu + f - nabla^2 f) with the metric-raised Hessian."""
    n = surface.n
    metric = surface.background_metric if metric is None else np.asarray(metric, dtype=float)
    b_mu = np.broadcast_to(np.asarray(b_mu, dtype=float), (n, 2, 2)).copy()
    return DetOperator(surface, m0=b_mu, mf=np.broadcast_to(np.eye(2), (n, 2, 2)).copy(),
                       r=np.linalg.inv(metric), gamma=np.asarray(gamma, dtype=float),
                       c=np.ones(n), p=0, pd_metric=metric, name="Hmu")


def operator_Hmu(surface, b_mu, f, gamma, metric=None):
    return operator_Hmu_op(surface, b_mu, gamma, metric)(np.broadcast_to(f, (surface.n,)).astype(float))


@dataclass
class SectionData:
    """Second-order data of a section u of a flat TS + L connection."""
    s_u: np.ndarray
    gamma_u: np.ndarray
    omega_u: np.ndarray
    base_density: np.ndarray


def section_data(surface, omega, u, log_rho):
    """S_u, nabla^u, the volume Omega(d1 u, d2 u, u) and the base density D(1).

    Omega = rho dx^dy^ds in the coordinate frame with rho = exp(log_rho); D(1)
    is the area density of S_u relative to the background area form.
    """
    u = np.asarray(u, dtype=float)
    s_u, gamma_u = s_u_and_nabla_u(surface, omega, u)
    d1, d2 = partials(surface, u, _push_section)
    du = np.stack([d1, d2], axis=1) + np.einsum("nkij,nj->nki", omega, u)
    frame = np.stack([du[:, 0], du[:, 1], u], axis=-1)
    omega_u = np.exp(log_rho) * np.linalg.det(frame)
    sym = 0.5 * (s_u + np.swapaxes(s_u, -1, -2))
    if np.any(np.linalg.eigvalsh(sym)[:, 0] <= 0):
        raise DomainError("S_u is not positive definite")
    base = np.sqrt(np.linalg.det(sym)) * np.exp(-2 * surface.log_conformal(surface.zpos))
    return SectionData(sym, gamma_u, omega_u, base)


def operator_D_op(surface, sec, geometric=False):
    """D(f) = D(1) f det(f - A(f)), with S_u(A(f)X, Y) = Hess^u f(X, Y).

    ``geometric`` switches to det(S_{u/f}) / Omega(u/f)^2, which equals 1
    exactly when u/f is the affine sphere normalization of the structure.
    """
    n = surface.n
    det_s = np.linalg.det(sec.s_u)
    if geometric:
        c, p = 1.0 / sec.omega_u ** 2, 4
    else:
        c, p = sec.base_density / det_s, 1
    return DetOperator(surface, m0=np.zeros((n, 2, 2)), mf=sec.s_u,
                       r=np.broadcast_to(np.eye(2), (n, 2, 2)).copy(), gamma=sec.gamma_u,
                       c=c, p=p, pd_metric=None, name="D_geo" if geometric else "D")


def operator_D(surface, sec, f, geometric=False):
    f = np.broadcast_to(np.asarray(f, dtype=float), (surface.n,)).copy()
    if np.any(f <= 0):
        raise DomainError("f must be positive")
    op = operator_D_op(surface, sec, geometric)
    lam = op.min_eigenvalue(f)
    bad = np.nonzero(lam <= 0)[0]
    if len(bad):
        raise DomainError(f"f is outside the ellipticity set at vertex {int(bad[0])}")
    return op(f)


def linearize_MA(op, f, direction, normalized=False):
    f = np.asarray(f, dtype=float)
    if np.any(op.min_eigenvalue(f) <= 0):
        raise EllipticityError("state is outside the ellipticity set")
    return op.linearize(f, direction, normalized)


# ---------------------------------------------------------------------------
# Newton


@dataclass
class MAResult:
    f: np.ndarray
    residual: float
    iters: int
    history: list = field(default_factory=list)
    min_g_history: list = field(default_factory=list)


def solve_MA(op, target, tol=1e-8, max_iter=50, f0=None, positive=False):
    """Newton with step halving that keeps G(f) positive definite at every vertex."""
    target = np.broadcast_to(np.asarray(target, dtype=float), (op.surface.n,)).copy()
    if np.any(~(target > 0)):
        raise DomainError("target must be positive")
    if f0 is None:
        f = _constant_seed(op, target)
    else:
        f = np.broadcast_to(np.asarray(f0, dtype=float), (op.surface.n,)).copy()
    lam = op.min_eigenvalue(f)
    if np.any(lam <= 0) or (positive and np.any(f <= 0)):
        raise EllipticityError("initial guess is outside the ellipticity set")
    r = op(f) - target
    history = [float(np.abs(r).max())]
    min_g = [float(lam.min())]
    for it in range(1, max_iter + 1):
        if history[-1] <= tol:
            return MAResult(f, history[-1], it - 1, history, min_g)
        step = spsolve(op.jacobian(f), -r)
        t = 1.0
        for _ in range(40):
            trial = f + t * step
            lam = op.min_eigenvalue(trial)
            if np.all(lam > 0) and (not positive or np.all(trial > 0)):
                rt = op(trial) - target
                if np.abs(rt).max() < history[-1] or t < 1e-3:
                    break
            t *= 0.5
        else:
            raise EllipticityError("step halving could not stay in the ellipticity set")
        f, r = trial, rt
        history.append(float(np.abs(r).max()))
        min_g.append(float(lam.min()))
    if history[-1] <= tol:
        return MAResult(f, history[-1], max_iter, history, min_g)
    raise ConvergenceError(f"no convergence in {max_iter} iterations "
                           f"(residual {history[-1]:.3e})", history)


def _constant_seed(op, target):
    """Constant f matching the mean target when the Hessian term is dropped."""
    goal = float(np.mean(target))
    lo, hi = 1e-6, 1.0
    f = lambda k: float(np.mean(op(np.full(op.surface.n, k))))
    if op.p == 0 and np.all(op.min_eigenvalue(np.zeros(op.surface.n)) > 0):
        lo = 0.0
        if f(0.0) >= goal:
            hi = 0.0
    for _ in range(200):
        if f(hi) >= goal or hi == 0.0:
            break
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < goal:
            lo = mid
        else:
            hi = mid
    return np.full(op.surface.n, hi)


def apriori_MA_check(op, f, target, slack=1e-6):
    """Maximum-principle checks at the extrema of f.

    At the argmin of f the Hessian is nonnegative, so target <= op(f) with the
    Hessian dropped; at the argmax the inequality reverses.  Also reports the
    two-sided C0 window:
    D: (inf target / sup D(1))^(1/3) <= f <= (sup target / inf D(1))^(1/3);
    H_mu: sqrt(inf target) - Lambda <= f <= sqrt(sup target) - lambda, with
    Lambda, lambda the extreme eigenvalues of B_mu.
    """
    f = np.asarray(f, dtype=float)
    target = np.broadcast_to(np.asarray(target, dtype=float), f.shape)
    if op.name == "Hmu":
        e = np.linalg.eigvals(op.m0)
        lo = np.sqrt(target.min()) - float(e.real.max())
        hi = np.sqrt(target.max()) - float(e.real.min())
    elif op.name == "D":
        base = op.c * np.linalg.det(op.mf)
        lo = (target.min() / base.max()) ** (1 / 3)
        hi = (target.max() / base.min()) ** (1 / 3)
    else:
        raise ValueError(f"no a-priori window for operator {op.name!r}")
    i_min, i_max = int(np.argmin(f)), int(np.argmax(f))
    m = op.m0 + f[:, None, None] * op.mf
    zeroth = op.c * f ** op.p * np.linalg.det(m)
    gap_min = float(zeroth[i_min] - target[i_min])
    gap_max = float(target[i_max] - zeroth[i_max])
    inside = bool(f.min() >= lo - slack and f.max() <= hi + slack)
    return {"argmin": i_min, "argmax": i_max, "gap_at_min": gap_min, "gap_at_max": gap_max,
            "window": [float(lo), float(hi)], "f_range": [float(f.min()), float(f.max())],
            "inside_window": inside,
            "passed": bool(gap_min >= -slack and gap_max >= -slack and inside)}


# ---------------------------------------------------------------------------
# general jet operators


def general_operators(surface, f, d=None, w=None, F=None, gamma=None, metric=None):
    """Forward evaluation of M(f) = d(j1 f) det(nabla^2 f + W(j1 f)) or L_F(f) = Lap f + F(j1 f).

    Jet callables receive ``(f, grad)`` arrays of shapes (n,) and (n, 2).
    """
    from .surface import laplacian
    f = np.broadcast_to(np.asarray(f, dtype=float), (surface.n,)).copy()
    grad = surface.gradient(f)
    if F is not None:
        return laplacian(surface, f) + F(f, grad)
    if gamma is None:
        from .connection import levi_civita
        gamma = levi_civita(surface)
    metric = surface.background_metric if metric is None else metric
    op = DetOperator(surface, m0=np.zeros((surface.n, 2, 2)), mf=np.zeros((surface.n, 2, 2)),
                     r=np.linalg.inv(metric), gamma=gamma, c=np.ones(surface.n))
    raised = op.r @ op.hess(f)
    wval = np.zeros((surface.n, 2, 2)) if w is None else w(f, grad)
    dval = np.ones(surface.n) if d is None else d(f, grad)
    return dval * np.linalg.det(raised + wval)


# ---------------------------------------------------------------------------
# cohomology forms


@dataclass
class ECohomologyForm:
    """E-valued 1-form mu(e_k) = (B e_k, alpha_k) on TS + L."""
    b: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)

    def as_section_form(self):
        out = np.zeros((len(self.b), 2, 3))
        out[:, :, :2] = np.swapaxes(self.b, -1, -2)
        out[:, :, 2] = self.alpha
        return out

    @classmethod
    def from_section_form(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(np.swapaxes(v[:, :, :2], -1, -2), v[:, :, 2].copy())

    def to_json(self):
        return {"version": "eform/1", "B": self.b.tolist(), "alpha": self.alpha.tolist()}

    @classmethod
    def from_json(cls, doc):
        check_version(doc, "eform/1")
        return cls(np.asarray(doc["B"]), np.asarray(doc["alpha"]))


def nabla_section(structure, v):
    """The exact form nabla v of a section v = (xi, lambda)."""
    s = structure.surface
    d1, d2 = partials(s, v, _push_section)
    dv = np.stack([d1, d2], axis=1) + np.einsum("nkij,nj->nki", structure.omega, v)
    return ECohomologyForm.from_section_form(dv)


def closedness_residual(structure, form):
    s = structure.surface
    v = form.as_section_form()
    from .connection import _push_section_form
    d1, d2 = partials(s, v, _push_section_form)
    om = structure.omega
    res = d1[:, 1] - d2[:, 0] + np.einsum("nij,nj->ni", om[:, 0], v[:, 1]) \
        - np.einsum("nij,nj->ni", om[:, 1], v[:, 0])
    return float(np.abs(res).max())


def _kill_alpha(structure, form):
    """Subtract nabla(xi, 0) with h(xi, .) = alpha; returns the symmetrized B and the removed skew part."""
    xi = np.linalg.solve(structure.h, form.alpha[..., None])[..., 0]
    v = np.concatenate([xi, np.zeros((len(xi), 1))], axis=1)
    ex = nabla_section(structure, v)
    b1 = form.b - ex.b
    # with alpha = 0, closedness makes B g-symmetric; remove the discrete skew part
    gb = structure.metric @ b1
    skew = 0.5 * (gb - np.swapaxes(gb, -1, -2))
    b1 = np.linalg.solve(structure.metric, gb - skew)
    return b1, float(np.abs(skew).max()), float(np.abs(form.alpha - ex.alpha).max())


def _dual_hessian_ops(structure):
    s = structure.surface
    ginv = np.linalg.inv(structure.metric)
    gam = structure.dual_gamma
    return ginv, gam


def hodge_representative(structure, form):
    """Gauge-fixed representative: alpha = 0 and B trace-free and J-anticommuting.

    Solves 2 f - tr(nabla^2_* f) = -tr(B1) for the gauge section (grad f, -f).
    Returns ``(representative, report)``.
    """
    s = structure.surface
    b1, skew, alpha_left = _kill_alpha(structure, form)
    ginv, gam = _dual_hessian_ops(structure)
    ops = [s.Dxx, s.Dxy, s.Dyy]
    trace_op = sparse.csr_matrix((s.n, s.n))
    for idx, (k, l) in enumerate([(0, 0), (0, 1), (1, 1)]):
        coef = ginv[:, k, l] + (ginv[:, l, k] if k != l else 0)
        trace_op = trace_op + sparse.diags(coef) @ ops[idx]
    for m, op in enumerate([s.Dx, s.Dy]):
        coef = -np.einsum("nlk,nkl->n", ginv, gam[:, :, m, :])
        trace_op = trace_op + sparse.diags(coef) @ op
    lhs = (2 * sparse.identity(s.n) - trace_op).tocsc()
    f = spsolve(lhs, -np.trace(b1, axis1=-2, axis2=-1))
    hop = DetOperator(s, m0=b1, mf=np.broadcast_to(np.eye(2), (s.n, 2, 2)).copy(), r=ginv,
                      gamma=gam, c=np.ones(s.n))
    b2 = hop.matrix(f)
    rep = ECohomologyForm(b2, np.zeros_like(form.alpha))
    report = {"skew_removed": skew, "alpha_residual": alpha_left,
              "trace": float(np.abs(np.trace(b2, axis1=-2, axis2=-1)).max()),
              "anticommute": float(np.abs(b2 @ J0 + J0 @ b2).max()),
              "gauge_f": f}
    return rep, report


def complex_structure_representative(structure, form, tol=1e-10, max_iter=50):
    """Representative with det B = 1; returns ``(J = J0 B, representative, report)``."""
    s = structure.surface
    b1, skew, alpha_left = _kill_alpha(structure, form)
    ginv, gam = _dual_hessian_ops(structure)
    op = DetOperator(s, m0=b1, mf=np.broadcast_to(np.eye(2), (s.n, 2, 2)).copy(), r=ginv,
                     gamma=gam, c=np.ones(s.n), p=0, pd_metric=structure.metric, name="Hmu")
    # seed from the trace-free gauge: det(B2 + t) = t^2 - e^2 for eigenvalues +-e
    hodge, hreport = hodge_representative(structure, form)
    e2 = -np.linalg.det(hodge.b)
    seed = hreport["gauge_f"] + np.sqrt(1.0 + max(float(e2.max()), 0.0))
    res = solve_MA(op, np.ones(s.n), tol=tol, max_iter=max_iter, f0=seed)
    b = op.matrix(res.f)
    j = J0 @ b
    rep = ECohomologyForm(b, np.zeros_like(form.alpha))
    report = {"skew_removed": skew, "alpha_residual": alpha_left,
              "det_residual": float(np.abs(np.linalg.det(b) - 1).max()),
              "J2_residual": float(np.abs(j @ j + np.eye(2)).max()),
              "newton_iters": res.iters, "min_G": min(res.min_g_history)}
    return j, rep, report
