"""The Wang equation H(mu) = f and its Newton solver.

H(mu) = -exp(4 mu) Lap(mu) + exp(6 mu) + k0 exp(4 mu), with Lap the analyst's
Laplacian of the background metric.  The solved metric is exp(2 mu) g0 and, for
f = G^{g0}(w, w), the pair (Levi-Civita + A, exp(2 mu) g0) is a Blaschke pair.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .io import check_version
from .surface import laplacian


class DomainError(ValueError):
    """Right-hand side outside the solvable class."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class WangResult:
    mu: np.ndarray
    residual: float
    iters: int
    history: list = field(default_factory=list)

    def to_json(self):
        return {"version": "wang/1", "mu": self.mu.tolist(), "residual": self.residual,
                "iters": self.iters}

    @classmethod
    def from_json(cls, doc):
        check_version(doc, "wang/1")
        return cls(np.asarray(doc["mu"], dtype=float), float(doc["residual"]), int(doc["iters"]))


def potential(mu, k0):
    """The zeroth-order part exp(6 mu) + k0 exp(4 mu)."""
    return np.exp(6 * mu) + k0 * np.exp(4 * mu)


def wang_operator(surface, mu):
    mu = np.asarray(mu, dtype=float)
    return -np.exp(4 * mu) * laplacian(surface, mu) + potential(mu, surface.k0)


def wang_linearization(surface, mu, lam):
    """Gateaux derivative 4 lam H(mu) + 2 lam exp(6 mu) - exp(4 mu) Lap(lam)."""
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    h = wang_operator(surface, mu)
    return 4 * lam * h + 2 * lam * np.exp(6 * mu) - np.exp(4 * mu) * laplacian(surface, lam)


def constant_solution(value, k0):
    """Root of exp(6c) + k0 exp(4c) = value on the branch where the potential increases."""
    if value < 0:
        raise DomainError("no constant solution for a negative value")
    if k0 == 0:
        if value == 0:
            raise DomainError("no solution on the flat torus for f = 0")
        return np.log(value) / 6.0
    lo = 0.0
    hi = max(1.0, np.log(value + 1.0))
    while potential(hi, k0) < value:
        hi *= 2
    if value == 0:
        return 0.0
    return brentq(lambda c: potential(c, k0) - value, lo, hi, xtol=1e-15, rtol=1e-15)


def _check_rhs(surface, f):
    f = np.broadcast_to(np.asarray(f, dtype=float), (surface.n,)).copy()
    if not np.all(np.isfinite(f)):
        raise DomainError("f must be finite")
    if np.any(f < 0):
        raise DomainError("f must be positive: found negative values")
    if surface.k0 == 0 and not np.any(f > 0):
        raise DomainError("on the flat torus f must be positive somewhere")
    return f


def solve_wang(surface, f, tol=1e-8, max_iter=50, mu0=None):
    """Damped Newton for H(mu) = f with a pseudo-transient fallback.

    The Jacobian is symmetrized as M exp(-4 mu) J = K + M diag(d) with
    d = (4H + 2 exp(6 mu)) exp(-4 mu), solved by a sparse direct factorization.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    f = _check_rhs(surface, f)
    if mu0 is None:
        mu = np.full(surface.n, constant_solution(float(np.dot(surface.mass, f) / surface.mass.sum()),
                                                  surface.k0))
    else:
        mu = np.broadcast_to(np.asarray(mu0, dtype=float), (surface.n,)).copy()
    mass = sparse.diags(surface.mass)
    stiff = surface.stiffness

    def residual(m):
        return wang_operator(surface, m) - f

    def merit(r, m):
        w = r * np.exp(-4 * m)
        return float(np.sqrt(np.dot(surface.mass, w * w)))

    r = residual(mu)
    history = [float(np.abs(r).max())]
    dt = 1.0
    for it in range(1, max_iter + 1):
        if history[-1] <= tol:
            return WangResult(mu, history[-1], it - 1, history)
        h = r + f
        d = (4 * h + 2 * np.exp(6 * mu)) * np.exp(-4 * mu)
        rhs = -surface.mass * r * np.exp(-4 * mu)
        m0 = merit(r, mu)
        accepted = False
        if np.all(d > 0):
            step = spsolve((stiff + mass @ sparse.diags(d)).tocsc(), rhs)
            t = 1.0
            for _ in range(5):
                trial = mu + t * step
                rt = residual(trial)
                if np.all(np.isfinite(rt)) and merit(rt, trial) <= (1 - 1e-4 * t) * m0:
                    mu, r, accepted = trial, rt, True
                    break
                t *= 0.5
        if not accepted:
            # pseudo-transient continuation: (K + M diag(d+) + M/dt) step = rhs
            while True:
                dd = np.maximum(d, 0.0) + 1.0 / dt
                step = spsolve((stiff + mass @ sparse.diags(dd)).tocsc(), rhs)
                trial = mu + step
                rt = residual(trial)
                if np.all(np.isfinite(rt)) and merit(rt, trial) < m0:
                    mu, r = trial, rt
                    dt *= 2.0
                    break
                dt *= 0.25
                if dt < 1e-12:
                    raise ConvergenceError("pseudo-transient continuation stalled", history)
        history.append(float(np.abs(r).max()))
    if history[-1] <= tol:
        return WangResult(mu, history[-1], max_iter, history)
    raise ConvergenceError(f"no convergence in {max_iter} iterations "
                           f"(residual {history[-1]:.3e})", history)


def apriori_check(surface, mu, f, slack=1e-6):
    """Maximum-principle checks at the extrema of mu.

    At the argmin of mu the Laplacian is nonnegative, so f <= P(mu); at the
    argmax f >= P(mu), where P(m) = exp(6m) + k0 exp(4m).  These pin mu inside
    [P^-1(min f), P^-1(max f)].  ``slack`` absorbs the residual of an accepted
    solve; the report also records that residual.
    """
    mu = np.asarray(mu, dtype=float)
    f = np.broadcast_to(np.asarray(f, dtype=float), mu.shape)
    k0 = surface.k0
    residual = float(np.abs(wang_operator(surface, mu) - f).max())
    i_min, i_max = int(np.argmin(mu)), int(np.argmax(mu))
    gap_min = float(potential(mu[i_min], k0) - f[i_min])
    gap_max = float(f[i_max] - potential(mu[i_max], k0))
    lo = constant_solution(max(float(f.min()) - slack, 0.0), k0) if (k0 != 0 or f.min() > slack) else -np.inf
    hi = constant_solution(float(f.max()) + slack, k0)
    inside = bool(mu.min() >= lo - 1e-12 and mu.max() <= hi + 1e-12)
    ok_min = gap_min >= -slack
    ok_max = gap_max >= -slack
    return {
        "argmin": i_min, "argmax": i_max,
        "gap_at_min": gap_min, "gap_at_max": gap_max,
        "window": [float(lo), float(hi)],
        "mu_range": [float(mu.min()), float(mu.max())],
        "inside_window": inside,
        "residual": residual,
        "passed": bool(ok_min and ok_max and inside),
    }
