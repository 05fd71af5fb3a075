"""Discrete closed surfaces: a periodic flat torus and a regular hyperbolic octagon.

A surface is stored as an *unglued* triangulation of a fundamental domain
(``copy_pos``/``cells``) together with a gluing table: every copy vertex has a
representative vertex (``copy_rep``) and the deck transformation
(``copy_mob``, a Mobius matrix) carrying the copy onto its representative.
Fields live on representative vertices and are expressed in the chart around
the representative position.  Derivatives are least-squares quadratic fits on
one-ring stencils whose neighbour values are pushed through the chart change.
"""

from dataclasses import dataclass, field
from functools import cached_property
import itertools
import math

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from . import mobius


class DomainError(ValueError):
    """Invalid surface parameters."""


@dataclass(eq=False)
class DiscreteSurface:
    kind: str
    params: dict
    k0: float
    copy_pos: np.ndarray
    copy_rep: np.ndarray
    copy_mob: np.ndarray
    cells: np.ndarray
    generators: list
    relation: list
    base_copy: int
    side_return: list = field(default_factory=list)

    def __post_init__(self):
        self.copy_pos = np.asarray(self.copy_pos, dtype=float)
        self.copy_rep = np.asarray(self.copy_rep, dtype=np.int64)
        self.copy_mob = np.asarray(self.copy_mob, dtype=complex)
        self.cells = np.asarray(self.cells, dtype=np.int64)
        n_rep = int(self.copy_rep.max()) + 1
        pos = np.zeros((n_rep, 2))
        is_rep = np.zeros(len(self.copy_rep), dtype=bool)
        for c, r in enumerate(self.copy_rep):
            if mobius.same_map(self.copy_mob[c], mobius.IDENTITY):
                pos[r] = self.copy_pos[c]
                is_rep[c] = True
        self.pos = pos
        self.rep_copy = np.full(n_rep, -1)
        self.rep_copy[self.copy_rep[is_rep]] = np.nonzero(is_rep)[0]
        if np.any(self.rep_copy < 0):
            raise DomainError("every vertex class needs an untransformed copy")
        self._build_operators()
        self._build_stencils()

    # -- basic geometry -------------------------------------------------

    @property
    def n(self):
        return len(self.pos)

    @property
    def zpos(self):
        return mobius.to_complex(self.pos)

    def log_conformal(self, z):
        """log of the background conformal factor: g0 = exp(2*s)|dz|^2."""
        z = np.asarray(z, dtype=complex)
        if self.k0 == 0:
            return np.zeros(z.shape)
        return np.log(2.0 / (1.0 - np.abs(z) ** 2))

    def dlog_conformal(self, z):
        z = np.asarray(z, dtype=complex)
        if self.k0 == 0:
            return np.zeros(z.shape + (2,))
        r2 = np.abs(z) ** 2
        return np.stack([2 * z.real, 2 * z.imag], axis=-1) / (1.0 - r2)[..., None]

    def d2log_conformal(self, z):
        """Second partials (xx, xy, yy) of the background log-factor."""
        z = np.asarray(z, dtype=complex)
        if self.k0 == 0:
            return np.zeros(z.shape + (3,))
        x, y = z.real, z.imag
        q = 1.0 - x * x - y * y
        return np.stack([2 / q + 4 * x * x / q ** 2, 4 * x * y / q ** 2,
                         2 / q + 4 * y * y / q ** 2], axis=-1)

    @property
    def background_metric(self):
        lam2 = np.exp(2 * self.log_conformal(self.zpos))
        return lam2[:, None, None] * np.eye(2)

    def distance(self, z1, z2):
        z1 = np.asarray(z1, dtype=complex)
        z2 = np.asarray(z2, dtype=complex)
        if self.k0 == 0:
            return np.abs(z1 - z2)
        num = 2 * np.abs(z1 - z2) ** 2
        den = (1 - np.abs(z1) ** 2) * (1 - np.abs(z2) ** 2)
        return np.arccosh(1 + num / den)

    # -- assembly -------------------------------------------------------

    def _build_operators(self):
        zc = mobius.to_complex(self.copy_pos)
        tri = zc[self.cells]
        l0 = self.distance(tri[:, 1], tri[:, 2])
        l1 = self.distance(tri[:, 2], tri[:, 0])
        l2 = self.distance(tri[:, 0], tri[:, 1])
        s = 0.5 * (l0 + l1 + l2)
        area = np.sqrt(np.maximum(s * (s - l0) * (s - l1) * (s - l2), 0.0))
        if np.any(area <= 0):
            raise DomainError("degenerate cell in triangulation")
        lengths = np.stack([l0, l1, l2], axis=1)
        rep = self.copy_rep[self.cells]
        rows, cols, vals = [], [], []
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            cot = (lengths[:, j] ** 2 + lengths[:, k] ** 2 - lengths[:, i] ** 2) / (4 * area)
            w = 0.5 * cot
            a, b = rep[:, j], rep[:, k]
            rows += [a, b, a, b]
            cols += [b, a, a, b]
            vals += [-w, -w, w, w]
        self.stiffness = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n))
        # mixed Voronoi areas: consistent at vertices of any valence
        cots = np.stack([(lengths[:, (i + 1) % 3] ** 2 + lengths[:, (i + 2) % 3] ** 2
                          - lengths[:, i] ** 2) / (4 * area) for i in range(3)], axis=1)
        share = np.zeros_like(lengths)
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            share[:, i] = (lengths[:, k] ** 2 * cots[:, k] + lengths[:, j] ** 2 * cots[:, j]) / 8
        obtuse = cots < 0
        bad = obtuse.any(axis=1)
        share[bad] = np.where(obtuse[bad], area[bad, None] / 2, area[bad, None] / 4)
        mass = np.zeros(self.n)
        np.add.at(mass, rep.ravel(), share.ravel())
        self.mass = mass
        self.cell_area = area
        diam = np.max(np.abs(tri - np.roll(tri, 1, axis=1)), axis=1)
        self.h = float(diam.max())

    def _build_stencils(self):
        zc = mobius.to_complex(self.copy_pos)
        zrep = self.zpos
        inv_mob = mobius.inverse(self.copy_mob)
        entries = {}
        for cell in self.cells:
            for c in cell:
                v = self.copy_rep[c]
                for q in cell:
                    if q == c:
                        continue
                    w = self.copy_rep[q]
                    m = self.copy_mob[c] @ inv_mob[q]
                    zq = complex(mobius.apply(self.copy_mob[c], zc[q]))
                    key = (int(v), int(w), round(zq.real, 9), round(zq.imag, 9))
                    if key not in entries:
                        entries[key] = (zq - zrep[v], m)
        keys = sorted(entries)
        rows = np.array([k[0] for k in keys])
        cols = np.array([k[1] for k in keys])
        off = np.array([entries[k][0] for k in keys])
        mats = np.array([entries[k][1] for k in keys])
        self.st_rows = rows
        self.st_cols = cols
        self.st_offset = np.stack([off.real, off.imag], axis=1)
        self.st_a = mobius.derivative(mats, zrep[cols])
        self.st_a2 = mobius.second_derivative(mats, zrep[cols])
        self.st_trivial = np.abs(self.st_a - 1) + np.abs(self.st_a2) < 1e-14

        weights = np.zeros((len(rows), 5))
        starts = np.searchsorted(rows, np.arange(self.n + 1))
        for v in range(self.n):
            sl = slice(starts[v], starts[v + 1])
            d = self.st_offset[sl]
            if len(d) < 5:
                raise DomainError(f"vertex {v} has too few neighbours for a quadratic fit")
            dx, dy = d[:, 0], d[:, 1]
            design = np.stack([dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy], axis=1)
            weights[sl] = np.linalg.pinv(design).T
        self.st_weights = weights
        nnz = len(rows)
        self._gather = sparse.csr_matrix(
            (np.ones(nnz), (np.arange(nnz), cols)), shape=(nnz, self.n))
        self._scatter = [
            sparse.csr_matrix((weights[:, k], (rows, np.arange(nnz))), shape=(self.n, nnz))
            for k in range(5)]
        ops = []
        for k in range(5):
            m = sparse.csr_matrix((weights[:, k], (rows, cols)), shape=(self.n, self.n))
            centre = np.asarray(self._scatter[k].sum(axis=1)).ravel()
            ops.append((m - sparse.diags(centre)).tocsr())
        self.Dx, self.Dy, self.Dxx, self.Dxy, self.Dyy = ops

    # -- derivative machinery --------------------------------------------

    def stencil_derivatives(self, values, push=None):
        """Gradient and Hessian fits (5 components) of a field of any tensor type.

        ``push(a, a2, x)`` moves neighbour values into the centre chart; it is
        only applied on stencil entries that cross a non-trivial gluing.
        Returns an array of shape ``(5, n, *value_shape)``: d/dx, d/dy, xx, xy, yy.
        """
        values = np.asarray(values)
        tail = values.shape[1:]
        nb = values[self.st_cols].copy()
        if push is not None and not np.all(self.st_trivial):
            cross = ~self.st_trivial
            nb[cross] = push(self.st_a[cross], self.st_a2[cross], nb[cross])
        diff = (nb - values[self.st_rows]).reshape(len(self.st_rows), -1)
        out = np.stack([np.asarray(s @ diff) for s in self._scatter])
        return out.reshape((5, self.n) + tail)

    def gradient(self, u):
        u = np.asarray(u, dtype=float)
        return np.stack([self.Dx @ u, self.Dy @ u], axis=-1)

    def coordinate_hessian(self, u):
        u = np.asarray(u, dtype=float)
        hxx, hxy, hyy = self.Dxx @ u, self.Dxy @ u, self.Dyy @ u
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def copy_values(self, values, push=None):
        """Express a representative field at every copy, in the copy's own chart."""
        values = np.asarray(values)
        out = values[self.copy_rep].copy()
        if push is None:
            return out
        inv = mobius.inverse(self.copy_mob)
        zr = self.zpos[self.copy_rep]
        a = mobius.derivative(inv, zr)
        a2 = mobius.second_derivative(inv, zr)
        cross = np.abs(a - 1) + np.abs(a2) > 1e-14
        if np.any(cross):
            out[cross] = push(a[cross], a2[cross], out[cross])
        return out

    # -- deck group ------------------------------------------------------

    def reduce_point(self, z):
        """Map a chart point back into the fundamental domain.

        Returns ``(z_reduced, m)`` with ``m`` the Mobius map applied.
        """
        z = complex(z)
        m = mobius.IDENTITY.copy()
        if self.kind == "torus":
            tau = complex(*self.params["tau"])
            t = z.imag / tau.imag
            s = z.real - t * tau.real
            shift = math.floor(s) + math.floor(t) * tau
            m = mobius.translation(-shift)
            return complex(mobius.apply(m, z)), m
        for _ in range(64):
            inside = True
            for centre, radius, ret in self.side_return:
                if abs(z - centre) < radius:
                    z = complex(mobius.apply(ret, z))
                    m = mobius.normalize(ret @ m)
                    inside = False
                    break
            if inside:
                return z, m
        raise DomainError("point reduction did not terminate")

    def locate(self, z):
        """Cell index and barycentric coordinates of a point in the fundamental domain."""
        from matplotlib.tri import Triangulation
        if not hasattr(self, "_trifinder"):
            self._triang = Triangulation(self.copy_pos[:, 0], self.copy_pos[:, 1], self.cells)
            self._trifinder = self._triang.get_trifinder()
        z = complex(z)
        cell = int(self._trifinder(z.real, z.imag))
        if cell < 0:
            return -1, None
        p = self.copy_pos[self.cells[cell]]
        mat = np.array([[p[0, 0] - p[2, 0], p[1, 0] - p[2, 0]],
                        [p[0, 1] - p[2, 1], p[1, 1] - p[2, 1]]])
        lam = np.linalg.solve(mat, np.array([z.real - p[2, 0], z.imag - p[2, 1]]))
        return cell, np.array([lam[0], lam[1], 1 - lam[0] - lam[1]])

    # -- invariant checks --------------------------------------------------

    def gauss_bonnet(self):
        return float(self.k0 * self.mass.sum())

    @property
    def euler_characteristic(self):
        return 0 if self.kind == "torus" else -2

    def check_closed(self):
        """Every edge of the glued surface is shared by exactly two cells."""
        rep = self.copy_rep[self.cells]
        counts = {}
        for cell, rcell in zip(self.cells, rep):
            for i in range(3):
                a, b = cell[i], cell[(i + 1) % 3]
                key = _glued_edge_key(self, a, b)
                counts[key] = counts.get(key, 0) + 1
        return all(c == 2 for c in counts.values())


def _canonical_sign(m):
    flat = m.ravel()
    lead = flat[np.argmax(np.abs(flat) > 1e-9)]
    s = lead.real if abs(lead.real) > 1e-9 else lead.imag
    return -m if s < 0 else m


def _glued_edge_key(surface, a, b):
    # An edge is identified with its deck translates; key by representative
    # endpoints plus the relative Mobius map between the two endpoint gluings.
    ra, rb = surface.copy_rep[a], surface.copy_rep[b]
    rel = mobius.normalize(surface.copy_mob[a] @ mobius.inverse(surface.copy_mob[b]))
    if (ra, rb) > (rb, ra):
        ra, rb = rb, ra
        rel = mobius.inverse(rel)
    rel = _canonical_sign(rel)
    flat = np.concatenate([rel.real.ravel(), rel.imag.ravel()])
    return (int(ra), int(rb)) + tuple(np.round(flat, 6) + 0.0)


# ---------------------------------------------------------------------------
# constructors


def build_torus(n, tau=1j):
    """Periodic n x n triangulated grid on C/(Z + tau Z) with the flat metric."""
    tau = complex(tau)
    if n < 4:
        raise DomainError("torus grid needs n >= 4")
    if tau.imag <= 0:
        raise DomainError("torus modulus needs Im(tau) > 0")
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    z = (ii + jj * tau) / n
    copy_pos = np.stack([z.real.ravel(), z.imag.ravel()], axis=1)
    copy_rep = ((ii % n) * n + (jj % n)).ravel()
    shift = (ii // n) + (jj // n) * tau
    copy_mob = np.array([mobius.translation(-s) for s in shift.ravel()])
    cells = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            cells.append((a, b, c))
            cells.append((a, c, d))
    gens = [mobius.translation(1.0), mobius.translation(tau)]
    return DiscreteSurface(
        kind="torus", params={"n": int(n), "tau": [tau.real, tau.imag]}, k0=0.0,
        copy_pos=copy_pos, copy_rep=copy_rep, copy_mob=copy_mob, cells=np.array(cells),
        generators=gens, relation=[(0, 1), (1, 1), (0, -1), (1, -1)],
        base_copy=int(idx[n // 2, n // 2]))


def octagon_geometry():
    """Corner radius, side circles and side-pairing maps of the regular octagon.

    Sides are numbered by their starting corner; the pairing word is
    a b a^-1 b^-1 c d c^-1 d^-1, i.e. side k is glued to side k+2 for k in
    {0, 1, 4, 5}.  ``pairings[k]`` maps side k onto side k+2.
    """
    rho = math.acosh(1.0 / math.tan(math.pi / 8) ** 2)
    r_v = math.tanh(rho / 2)
    corners = r_v * np.exp(1j * np.pi / 4 * np.arange(8))
    dist = (r_v ** 2 + 1) / (2 * r_v * math.cos(math.pi / 8))
    centres = dist * np.exp(1j * (np.pi / 4 * np.arange(8) + np.pi / 8))
    radii = np.sqrt(np.abs(centres) ** 2 - 1)
    pairings = {}
    for k in (0, 1, 4, 5):
        partner = k + 2
        phi = 0.5 * ((k + 0.5) + (partner + 0.5)) * np.pi / 4
        e = np.exp(-2j * phi)
        c = centres[partner]
        pairings[k] = mobius.normalize(np.array([[c * e, -1.0], [e, -np.conj(c)]]))
    return corners, centres, radii, pairings


def _hyperboloid(z):
    r2 = abs(z) ** 2
    return np.array([2 * z.real, 2 * z.imag, 1 + r2]) / (1 - r2)


def _midpoint(z1, z2):
    p = _hyperboloid(z1) + _hyperboloid(z2)
    p = p / math.sqrt(p[2] ** 2 - p[0] ** 2 - p[1] ** 2)
    return complex(p[0], p[1]) / (1 + p[2])


def build_genus2(refinement=0):
    """Regular hyperbolic octagon (angles pi/4) glued into a closed genus-2 surface.

    The eight centre-fan triangles are split ``refinement + 2`` times by
    hyperbolic geodesic midpoints, which keeps the subdivision equivariant
    under the side pairings.
    """
    if refinement < 0:
        raise DomainError("refinement must be >= 0")
    corners, centres, radii, pairings = octagon_geometry()
    points = [0j] + [complex(c) for c in corners]
    tris = [(0, 1 + j, 1 + (j + 1) % 8) for j in range(8)]
    for _ in range(refinement + 2):
        mids = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in mids:
                points.append(_midpoint(points[a], points[b]))
                mids[key] = len(points) - 1
            return mids[key]

        new = []
        for a, b, c in tris:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        tris = new
    pts = np.array(points)
    tree = cKDTree(np.stack([pts.real, pts.imag], axis=1))

    def find(z):
        d, i = tree.query([z.real, z.imag])
        if d > 1e-8:
            raise DomainError("side pairing does not match the subdivision")
        return int(i)

    on_side = {k: [] for k in range(8)}
    for i, z in enumerate(pts):
        for k in range(8):
            if abs(abs(z - centres[k]) - radii[k]) < 1e-10:
                on_side[k].append(i)

    corner_idx = list(range(1, 9))
    n_copies = len(pts)
    mob = [None] * n_copies
    rep_of = [None] * n_copies
    # corners: breadth-first search over the pairing generators
    mob[corner_idx[0]] = mobius.IDENTITY.copy()
    queue = [corner_idx[0]]
    gens = []
    for k, g in pairings.items():
        gens += [(k, g), (k + 2, mobius.inverse(g))]
    while queue:
        c = queue.pop(0)
        for side, g in gens:
            if c not in on_side[side]:
                continue
            img = find(complex(mobius.apply(g, pts[c])))
            if mob[img] is None:
                mob[img] = mobius.normalize(mob[c] @ mobius.inverse(g))
                queue.append(img)
    for c in corner_idx:
        rep_of[c] = corner_idx[0]
    for k, g in pairings.items():
        for i in on_side[k]:
            if i in corner_idx:
                continue
            j = find(complex(mobius.apply(g, pts[i])))
            rep_of[i] = i
            mob[i] = mobius.IDENTITY.copy()
            rep_of[j] = i
            mob[j] = mobius.inverse(g)
    for i in range(n_copies):
        if rep_of[i] is None:
            rep_of[i] = i
            mob[i] = mobius.IDENTITY.copy()
    classes = sorted(set(rep_of))
    renum = {c: r for r, c in enumerate(classes)}
    copy_rep = np.array([renum[r] for r in rep_of])

    a, b, c, d = (pairings[k] for k in (0, 1, 4, 5))
    relation = _find_relation([a, b, c, d])
    # maps returning a point that crossed side j back into the octagon
    side_return = []
    for k, g in pairings.items():
        side_return.append((complex(centres[k]), float(radii[k]), g))
        side_return.append((complex(centres[k + 2]), float(radii[k + 2]), mobius.inverse(g)))
    return DiscreteSurface(
        kind="genus2", params={"refinement": int(refinement)}, k0=-1.0,
        copy_pos=np.stack([pts.real, pts.imag], axis=1), copy_rep=copy_rep,
        copy_mob=np.array(mob), cells=np.array(tris), generators=[a, b, c, d],
        relation=relation, base_copy=0, side_return=side_return)


def _find_relation(gens):
    """Word in the generators (index, exponent) whose Mobius product is the identity."""
    for e in itertools.product((1, -1), repeat=4):
        for order in ((0, 1, 2, 3), (2, 3, 0, 1)):
            i, j, k, l = order
            word = [(i, e[i]), (j, e[j]), (i, -e[i]), (j, -e[j]),
                    (k, e[k]), (l, e[l]), (k, -e[k]), (l, -e[l])]
            m = mobius.IDENTITY.copy()
            for g, s in word:
                m = m @ (gens[g] if s > 0 else mobius.inverse(gens[g]))
            if mobius.same_map(m, mobius.IDENTITY, tol=1e-8):
                return word
    raise DomainError("no surface relation found among the side pairings")


def build(spec):
    """Build a surface from a CLI spec like ``torus:16,i`` or ``genus2:2``."""
    kind, _, arg = spec.partition(":")
    if kind == "torus":
        parts = arg.split(",") if arg else ["16"]
        n = int(parts[0])
        tau = complex(parts[1].replace("i", "j")) if len(parts) > 1 else 1j
        if len(parts) > 1 and parts[1].strip() in ("i", "1i"):
            tau = 1j
        return build_torus(n, tau)
    if kind == "genus2":
        return build_genus2(int(arg) if arg else 0)
    raise DomainError(f"unknown surface spec {spec!r}")


# ---------------------------------------------------------------------------
# scalar operators


def laplacian(surface, u):
    """Laplace-Beltrami of ``u`` for the background metric (analyst's sign: Δ sin = -sin)."""
    return -(surface.stiffness @ np.asarray(u, dtype=float)) / surface.mass


def laplacian_matrix(surface):
    return -(sparse.diags(1.0 / surface.mass) @ surface.stiffness).tocsr()


def background_christoffel(surface, z=None):
    """Levi-Civita coefficients of the background metric at chart points."""
    from .connection import conformal_christoffel
    z = surface.zpos if z is None else z
    return conformal_christoffel(surface.dlog_conformal(z))


def hessian(surface, u, conn=None, log_factor=None):
    """Metric-raised covariant Hessian X -> ∇²u(X).

    ``conn`` holds Christoffel coefficients ``[n, k, i, j]`` (default: the
    background Levi-Civita connection) and ``log_factor`` the log of the
    conformal factor of the metric used to raise the index.
    """
    u = np.asarray(u, dtype=float)
    if conn is None:
        conn = background_christoffel(surface)
    if log_factor is None:
        log_factor = surface.log_conformal(surface.zpos)
    hess = surface.coordinate_hessian(u)
    grad = surface.gradient(u)
    hess = hess - np.einsum("nkij,ni->nkj", conn, grad)
    return np.exp(-2 * np.asarray(log_factor))[:, None, None] * hess


def bilinear_hessian(surface, u, conn):
    """Covariant Hessian ∂²u - Γ∂u as a bilinear form (not raised)."""
    u = np.asarray(u, dtype=float)
    return surface.coordinate_hessian(u) - np.einsum("nkij,ni->nkj", conn, surface.gradient(u))


# ---------------------------------------------------------------------------
# serialization

SURFACE_VERSION = "surface/1"


def to_json(surface):
    return {
        "version": SURFACE_VERSION,
        "kind": surface.kind,
        "params": surface.params,
        "k0": surface.k0,
        "vertices": surface.copy_pos.tolist(),
        "cells": surface.cells.tolist(),
        "pairing": {
            "rep": surface.copy_rep.tolist(),
            "mobius_re": surface.copy_mob.real.tolist(),
            "mobius_im": surface.copy_mob.imag.tolist(),
        },
        "generators": {
            "re": np.array(surface.generators).real.tolist(),
            "im": np.array(surface.generators).imag.tolist(),
        },
        "relation": [list(w) for w in surface.relation],
        "base_copy": surface.base_copy,
        "side_return": [[c.real, c.imag, r, np.asarray(m).real.tolist(), np.asarray(m).imag.tolist()]
                        for c, r, m in surface.side_return],
        "metric": surface.background_metric.tolist(),
        "weights": surface.mass.tolist(),
    }


def from_json(doc):
    from .io import check_version
    check_version(doc, SURFACE_VERSION)
    gens = np.array(doc["generators"]["re"]) + 1j * np.array(doc["generators"]["im"])
    side_return = [(complex(c_re, c_im), r, np.array(m_re) + 1j * np.array(m_im))
                   for c_re, c_im, r, m_re, m_im in doc.get("side_return", [])]
    return DiscreteSurface(
        kind=doc["kind"], params=doc["params"], k0=float(doc["k0"]),
        copy_pos=np.array(doc["vertices"]), copy_rep=np.array(doc["pairing"]["rep"]),
        copy_mob=np.array(doc["pairing"]["mobius_re"]) + 1j * np.array(doc["pairing"]["mobius_im"]),
        cells=np.array(doc["cells"]), generators=list(gens),
        relation=[tuple(w) for w in doc["relation"]], base_copy=int(doc["base_copy"]),
        side_return=side_return)
