"""Parallel transport, holonomy and the developing map of a flat TS + L connection.

Transport follows the unglued triangulation of the fundamental domain: a
breadth-first spanning tree from the base copy carries a parallel frame to
every copy, each tree edge integrated by a Magnus exponential scheme for dP/dt = -Omega(t) P with the
coefficients interpolated linearly along the chart segment.  A deck map T_c
sending copy c to its representative r gives the holonomy
rho(T_c) = P(r)^-1 Phi_c P(c), and the developing map is phi(x) = P(x)^-1 e3.
"""

from collections import deque
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import expm

from . import mobius
from .io import check_version


class ImmersionError(ValueError):
    """Developed map is degenerate at some vertex."""


class OutOfDomain(ValueError):
    """Point outside the region where an integral or chart is defined."""


@dataclass(eq=False)
class EConnection:
    """Coefficients ``omega[v, k]`` of a connection on TS + L (coordinate frame).

    With ``dmu`` given, transport runs in the unimodular frame (e_k / sqrt(rho), s)
    for the volume density rho = exp(2 mu) rho0, where rho0 is the background
    area density, ``mu`` the scalar (default 0) and ``dmu`` its chart gradient.
    Without ``dmu``, transport uses the coordinate frame directly.
    """
    omega: np.ndarray
    dmu: np.ndarray = None
    mu: np.ndarray = None

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if self.dmu is not None:
            self.dmu = np.asarray(self.dmu, dtype=float)
        if self.mu is not None:
            self.mu = np.asarray(self.mu, dtype=float)

    @property
    def unimodular(self):
        return self.dmu is not None

    @classmethod
    def for_metric(cls, surface, omega, mu):
        """Transport in the unimodular frame of exp(2 mu) g0."""
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (surface.n,)).copy()
        return cls(omega, dmu=surface.gradient(mu), mu=mu)

    def copy_coefficients(self, surface):
        """Coefficients at every copy in the copy's chart and transport frame."""
        om = surface.copy_values(self.omega, push=lambda a, a2, x: mobius.push_econnection(a, a2, x))
        if not self.unimodular:
            return om
        dmu = surface.copy_values(self.dmu, push=lambda a, a2, x: mobius.push_covector(a, x))
        z = mobius.to_complex(surface.copy_pos)
        dlog = dmu + surface.dlog_conformal(z)
        if self.mu is not None:
            half = surface.copy_values(self.mu) + surface.log_conformal(z)
        else:
            half = surface.log_conformal(z)
        # gauge G = diag(rho^-1/2, rho^-1/2, 1): G^-1 omega G + G^-1 dG
        s = np.exp(half)
        om = om.copy()
        om[:, :, :2, 2] *= s[:, None, None]
        om[:, :, 2, :2] /= s[:, None, None]
        for k in range(2):
            om[:, k, 0, 0] -= dlog[:, k]
            om[:, k, 1, 1] -= dlog[:, k]
        return om

    def base_gauge(self, surface):
        """Change from the transport frame to the coordinate frame at the base copy."""
        g = np.eye(self.omega.shape[-1])
        if self.unimodular:
            b = surface.base_copy
            half = surface.log_conformal(complex(mobius.to_complex(surface.copy_pos[b])))
            if self.mu is not None:
                half = half + self.mu[surface.copy_rep[b]]
            g[:2, :2] *= np.exp(-half)
        return g

    def deck_gauge(self, surface):
        """Fibre map Phi_c from each copy to its representative, in transport frames."""
        z = mobius.to_complex(surface.copy_pos)
        a = mobius.derivative(surface.copy_mob, z)
        if self.unimodular:
            a = a / np.abs(a)
        phi, _ = mobius.gauge_blocks(a)
        return phi


# ---------------------------------------------------------------------------
# transport


def transport_segment(omega_a, omega_b, delta, substeps=4):
    """Transport matrix along a straight chart segment with linear coefficients.

    Solves dP/dt = -Omega(t) P on [0, 1], Omega(t) = sum_k delta_k omega_k(t),
    with the fourth-order two-point Gauss Magnus integrator.  Each substep is
    an exact exponential, so traceless coefficients give determinant one.
    """
    wa = np.einsum("k,kij->ij", delta, omega_a)
    wb = np.einsum("k,kij->ij", delta, omega_b)
    dim = wa.shape[-1]
    p = np.eye(dim)
    hstep = 1.0 / substeps
    off = 0.5 - math.sqrt(3.0) / 6.0
    for s in range(substeps):
        t1 = (s + off) * hstep
        t2 = (s + 1 - off) * hstep
        a1 = -((1 - t1) * wa + t1 * wb)
        a2 = -((1 - t2) * wa + t2 * wb)
        m = 0.5 * hstep * (a1 + a2) + math.sqrt(3.0) / 12.0 * hstep ** 2 * (a2 @ a1 - a1 @ a2)
        p = expm(m) @ p
    return p


def parallel_transport(surface, econn, path, substeps=4):
    """Transport along a polyline of copy indices joined by cell edges."""
    om = econn.copy_coefficients(surface)
    adj = _copy_adjacency(surface)
    p = np.eye(om.shape[-1])
    for a, b in zip(path[:-1], path[1:]):
        if b not in adj[a]:
            raise OutOfDomain(f"copies {a} and {b} are not joined by a mesh edge")
        delta = surface.copy_pos[b] - surface.copy_pos[a]
        p = transport_segment(om[a], om[b], delta, substeps) @ p
    return p


def _copy_adjacency(surface):
    adj = [set() for _ in range(len(surface.copy_pos))]
    for cell in surface.cells:
        for i in range(3):
            a, b = int(cell[i]), int(cell[(i + 1) % 3])
            adj[a].add(b)
            adj[b].add(a)
    return [sorted(s) for s in adj]


def spanning_transport(surface, econn, substeps=4):
    """Parallel frames P(c) from the base copy to every copy, plus BFS parents."""
    om = econn.copy_coefficients(surface)
    adj = _copy_adjacency(surface)
    n = len(surface.copy_pos)
    dim = om.shape[-1]
    frames = np.zeros((n, dim, dim))
    parent = np.full(n, -1)
    seen = np.zeros(n, dtype=bool)
    base = surface.base_copy
    frames[base] = np.eye(dim)
    seen[base] = True
    queue = deque([base])
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if seen[b]:
                continue
            delta = surface.copy_pos[b] - surface.copy_pos[a]
            frames[b] = transport_segment(om[a], om[b], delta, substeps) @ frames[a]
            parent[b] = a
            seen[b] = True
            queue.append(b)
    return frames, parent


# ---------------------------------------------------------------------------
# holonomy


@dataclass
class HolonomyRep:
    generators: list
    relation_residual: float
    consistency: float = 0.0
    copy_holonomy: np.ndarray = field(default=None, repr=False)

    def to_json(self):
        return {"version": "holonomy/1",
                "generators": [np.asarray(g).tolist() for g in self.generators],
                "relation_residual": self.relation_residual,
                "consistency": self.consistency}

    @classmethod
    def from_json(cls, doc):
        check_version(doc, "holonomy/1")
        return cls([np.asarray(g) for g in doc["generators"]], float(doc["relation_residual"]),
                   float(doc.get("consistency", 0.0)))


def copy_holonomies(surface, econn, frames=None):
    if frames is None:
        frames, _ = spanning_transport(surface, econn)
    gauge = econn.deck_gauge(surface)
    rep_frames = frames[surface.rep_copy[surface.copy_rep]]
    rho = np.linalg.solve(rep_frames, gauge @ frames)
    gb = econn.base_gauge(surface)
    return gb @ rho @ np.linalg.inv(gb)


def holonomy(surface, econn, frames=None):
    """Holonomy matrices of the surface-group generators and the relation defect."""
    rho_c = copy_holonomies(surface, econn, frames)
    gens = []
    spread = 0.0
    for g in surface.generators:
        direct = [c for c in range(len(rho_c)) if mobius.same_map(surface.copy_mob[c], g)]
        inverse = [c for c in range(len(rho_c)) if mobius.same_map(surface.copy_mob[c], mobius.inverse(g))]
        cands = [rho_c[c] for c in direct] + [np.linalg.inv(rho_c[c]) for c in inverse]
        if not cands:
            raise ValueError("generator does not occur as a deck map of any copy")
        gens.append(cands[0])
        spread = max(spread, max(float(np.abs(m - cands[0]).max()) for m in cands))
    prod = np.eye(gens[0].shape[0])
    for i, e in surface.relation:
        prod = prod @ (gens[i] if e > 0 else np.linalg.inv(gens[i]))
    residual = float(np.linalg.norm(prod - np.eye(len(prod))))
    return HolonomyRep(gens, residual, spread, rho_c)


# ---------------------------------------------------------------------------
# developing map


@dataclass
class DevelopedSurface:
    points: np.ndarray
    frames: np.ndarray
    tangents: np.ndarray = field(default=None, repr=False)

    def to_json(self):
        return {"version": "developed/1", "points": self.points.tolist(),
                "frames": self.frames.tolist()}

    @classmethod
    def from_json(cls, doc):
        check_version(doc, "developed/1")
        return cls(np.asarray(doc["points"]), np.asarray(doc["frames"]))


def develop(surface, econn, u0=None, base_frame=None, theta=1e-8, frames=None):
    """Developed points phi(c) = B0 P(c)^-1 u0 at every copy of the fundamental domain.

    By default B0 expresses the result in the coordinate frame at the base copy.
    """
    if frames is None:
        frames, _ = spanning_transport(surface, econn)
    dim = frames.shape[-1]
    u0 = np.eye(dim)[-1] if u0 is None else np.asarray(u0, dtype=float)
    b0 = econn.base_gauge(surface) if base_frame is None else np.asarray(base_frame, dtype=float)
    inv = b0 @ np.linalg.inv(frames)
    points = inv @ u0
    om = econn.copy_coefficients(surface)
    tangents = np.einsum("cij,ckjl,l->cki", inv, om, u0)
    span = np.concatenate([tangents, points[:, None, :]], axis=1)
    sv = np.linalg.svd(span, compute_uv=False)
    bad = np.nonzero(sv[:, -1] <= theta * sv[:, 0])[0]
    if len(bad):
        raise ImmersionError(f"developing map is not an immersion at copy {int(bad[0])}")
    return DevelopedSurface(points, inv, tangents)


def equivariance_residual(surface, dev, hol):
    """max |rho(T_c) phi(c) - phi(rep(c))| over all copies."""
    reps = surface.rep_copy[surface.copy_rep]
    moved = np.einsum("cij,cj->ci", hol.copy_holonomy, dev.points)
    return float(np.abs(moved - dev.points[reps]).max())


def convexity_certificate(surface, dev, hol, theta=0.0):
    """Local convexity and radial test of the developed surface.

    Around each vertex the one-ring is developed (neighbours across gluings
    are moved by the copy holonomy), expressed in the frame (d1 phi, d2 phi,
    phi) and the phi-coefficient is fit by a quadratic form B.  B definite
    means strictly locally convex; B positive means radial.
    """
    n = surface.n
    nb = [[] for _ in range(n)]
    for cell in surface.cells:
        for c in cell:
            for q in cell:
                if q != c:
                    nb[surface.copy_rep[c]].append((int(c), int(q)))
    lam0 = np.exp(-2 * surface.log_conformal(surface.zpos))
    min_eig = np.zeros(n)
    max_eig = np.zeros(n)
    for v in range(n):
        r = surface.rep_copy[v]
        p = dev.points[r]
        frame = np.column_stack([dev.tangents[r, 0], dev.tangents[r, 1], p])
        rows, rhs = [], []
        for c, q in nb[v]:
            target = hol.copy_holonomy[c] @ dev.points[q]
            coef = np.linalg.solve(frame, target - p)
            a1, a2 = coef[0], coef[1]
            rows.append([0.5 * a1 * a1, a1 * a2, 0.5 * a2 * a2])
            rhs.append(coef[2])
        sol, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
        b = np.array([[sol[0], sol[1]], [sol[1], sol[2]]]) * lam0[v]
        w = np.linalg.eigvalsh(b)
        min_eig[v], max_eig[v] = w[0], w[1]
    convex = bool(np.all(min_eig > theta) or np.all(max_eig < -theta))
    radial = bool(np.all(min_eig > theta))
    return {"min_B": float(min_eig.min()), "max_B": float(max_eig.max()),
            "negative_vertices": int(np.sum(min_eig <= theta)),
            "convex": convex, "radial": radial, "passed": convex and radial}


# ---------------------------------------------------------------------------
# Vinberg characteristic function


def vinberg_characteristic(cone_basis, x):
    """Characteristic function of the simplicial cone spanned by the columns of ``cone_basis``.

    With y = B^-1 x the dual-cone integral separates into |det B^-1| / (y1 y2 y3).
    """
    b = np.asarray(cone_basis, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.linalg.solve(b, x)
    if np.any(y <= 0):
        raise OutOfDomain("x is not in the open cone: the integral diverges")
    return float(abs(1.0 / np.linalg.det(b)) / np.prod(y))


# ---------------------------------------------------------------------------
# Titeica model


@dataclass
class TiteicaModel:
    c: float
    tau: complex
    mu: float
    f: float
    a_dir: np.ndarray
    omega: np.ndarray
    eigenbasis: np.ndarray
    holonomy: list

    def immersion(self, z, base=0j):
        """Closed-form developed point of the chart point ``z``: exp(d . omega) e3."""
        d = complex(z) - complex(base)
        return expm(d.real * self.omega[0] + d.imag * self.omega[1]) @ np.eye(3)[2]

    def product(self, points):
        """x1 x2 x3 in the diagonalizing basis."""
        y = np.linalg.solve(self.eigenbasis, np.asarray(points).T).T
        return np.prod(y, axis=-1)


def titeica_reference(c, tau=1j):
    """Constant solution on the flat torus for the cubic differential c dz^3."""
    from .cubic import a_from_phi
    if not c > 0:
        raise ValueError("the Titeica constant must be positive")
    tau = complex(tau)
    f = 2.0 * c * c
    mu = math.log(f) / 6.0
    a_dir = a_from_phi(np.array([complex(c)]), np.array([mu]))[0]
    omega = np.zeros((2, 3, 3))
    for k in range(2):
        omega[k, :2, :2] = a_dir[k]
        omega[k, k, 2] = 1.0
        omega[k, 2, k] = math.exp(2 * mu)
    # the coefficients commute; a generic combination separates the common eigenlines
    w, v = np.linalg.eig(omega[0] + math.sqrt(2.0) * omega[1])
    order = np.argsort(w.real)
    basis = np.real(v[:, order])
    # orient the eigenlines so the base point has positive coordinates
    basis = basis * np.sign(np.linalg.solve(basis, np.eye(3)[2]))
    hol = [expm(omega[0]), expm(tau.real * omega[0] + tau.imag * omega[1])]
    return TiteicaModel(c=float(c), tau=tau, mu=mu, f=f, a_dir=a_dir, omega=omega,
                        eigenbasis=basis, holonomy=hol)


def eigenvalue_distance(m1, m2):
    """Distance between eigenvalue multisets (sorted by real then imaginary part)."""
    e1 = np.linalg.eigvals(m1)
    e2 = np.linalg.eigvals(m2)
    e1 = e1[np.lexsort((e1.imag, e1.real))]
    e2 = e2[np.lexsort((e2.imag, e2.real))]
    return float(np.abs(e1 - e2).max())


# ---------------------------------------------------------------------------
# geodesics


def _interpolator(surface, gamma):
    if callable(gamma):
        return gamma
    gc = surface.copy_values(gamma, push=lambda a, a2, x: mobius.push_christoffel(a, a2, x))

    def at(z):
        cell, bary = surface.locate(z)
        if cell < 0:
            raise OutOfDomain("point not in the fundamental domain")
        return np.einsum("i,ikab->kab", bary, gc[surface.cells[cell]])

    return at


def _metric_at(surface, z, g):
    """Conformal factor exp(2 phi) of the diagnostic metric and its gradient of phi."""
    if g is None:
        phi = float(surface.log_conformal(z))
        dphi = surface.dlog_conformal(z)
        return math.exp(2 * phi), dphi
    return g(z)


def _sup_metric_derivative(surface, at, g, samples):
    k = 0.0
    angles = np.linspace(0, np.pi, 24, endpoint=False)
    units = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for z in samples:
        try:
            gam = at(z)
        except OutOfDomain:
            continue
        lam2, dphi = _metric_at(surface, z, g)
        # (nabla_X g)(X, X) = lam2 (2 dphi(X)|X|^2 - 2 <Gamma(X)X, X>), X unit for g
        x = units / math.sqrt(lam2)
        gx = np.einsum("nk,kij,nj->ni", x, gam, x)
        val = lam2 * (2 * (x @ dphi) * np.sum(x * x, axis=1) - 2 * np.sum(gx * x, axis=1))
        k = max(k, 0.5 * float(np.abs(val).max()))
    return k


def trace_geodesic(surface, gamma, x0, v0, T, dt, g=None):
    """RK4 geodesic of a connection with Lipschitz diagnostics for 1/|c'|_g.

    ``gamma`` is a vertex field of Christoffel coefficients or a callable of a
    complex chart point; ``g`` is an optional callable returning
    (exp(2 phi), dphi) of the diagnostic metric (default: background metric).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    at = _interpolator(surface, gamma)
    z, _ = surface.reduce_point(complex(x0))
    v = complex(v0[0], v0[1]) if np.ndim(v0) else complex(v0)

    def rhs(state):
        zz, vv = state
        gam = at(zz)
        vec = np.array([vv.real, vv.imag])
        acc = -np.einsum("k,kij,j->i", vec, gam, vec)
        return vv, complex(acc[0], acc[1])

    def speed(zz, vv):
        lam2, _ = _metric_at(surface, zz, g)
        return math.sqrt(lam2) * abs(vv)

    steps = int(round(T / dt))
    path = [z]
    mus = [speed(z, v)]
    length = 0.0
    truncated = False
    for _ in range(steps):
        try:
            k1 = rhs((z, v))
            k2 = rhs((z + dt / 2 * k1[0], v + dt / 2 * k1[1]))
            k3 = rhs((z + dt / 2 * k2[0], v + dt / 2 * k2[1]))
            k4 = rhs((z + dt * k3[0], v + dt * k3[1]))
        except OutOfDomain:
            truncated = True
            break
        zn = z + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        vn = v + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        zr, m = surface.reduce_point(zn)
        if not mobius.same_map(m, mobius.IDENTITY):
            vn = vn * complex(mobius.derivative(m, zn))
            zn = zr
        if not np.isfinite(abs(vn)) or abs(vn) > 1e8:
            truncated = True
            break
        mu_new = speed(zn, vn)
        length += 0.5 * dt * (mus[-1] + mu_new)
        z, v = zn, vn
        path.append(z)
        mus.append(mu_new)
    mus = np.array(mus)
    ratio = np.abs(np.diff(1.0 / mus)) / dt if len(mus) > 1 else np.zeros(0)
    samples = list(mobius.to_complex(surface.copy_pos))
    samples += list(mobius.to_complex(surface.copy_pos[surface.cells].mean(axis=1)))
    samples += list(path)
    big_k = _sup_metric_derivative(surface, at, g, samples)
    return {
        "path": np.array(path), "mu": mus,
        "ratio_max": float(ratio.max()) if ratio.size else 0.0,
        "K": big_k, "length": length, "truncated": truncated,
    }
