"""Command-line interface and SVG export.

Exit codes: 0 success with all certificates passing, 2 certificate failure
(artifacts still written), 1 hard error, 64 usage error.  Every command emits
a "summary/1" JSON document: to ``--summary`` when given, otherwise to stdout
(``vinberg`` prints its value on stdout instead).
"""

import argparse
import json
import math
import os
import sys

import numpy as np
from scipy.spatial import ConvexHull

from . import connection as cn
from . import cubic
from . import developing as dv
from . import io
from . import monge_ampere as ma
from . import pipeline as pl
from . import surface as sf
from . import wang

EXIT_OK, EXIT_ERROR, EXIT_CERT, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


# ---------------------------------------------------------------------------
# SVG


def _chart_basis(chart):
    ell = np.asarray(chart, dtype=float)
    q, _ = np.linalg.qr(np.column_stack([ell, np.eye(3)]))
    return ell, q[:, 1:3]


def auto_chart(points):
    """Mean direction of the points: a chart that sees a properly convex image whole."""
    pts = np.asarray(points, dtype=float)
    unit = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    return unit.mean(axis=0)


def project_chart(points, chart=(1.0, 1.0, 1.0), eps=1e-12):
    """Affine chart <ell, x> = 1: returns 2D coordinates and a mask of kept points."""
    pts = np.asarray(points, dtype=float)
    if chart is None:
        chart = auto_chart(pts)
    ell, basis = _chart_basis(chart)
    den = pts @ ell
    keep = den > eps * np.linalg.norm(pts, axis=-1)
    xy = np.full((len(pts), 2), np.nan)
    xy[keep] = (pts[keep] / den[keep, None]) @ basis
    return xy, keep


def export_svg(surface, dev, chart=None, hol=None, ring=False, size=600):
    """Mesh edges of the developed fundamental domain as SVG polylines.

    ``chart`` is the covector of the affine chart; None picks the mean
    direction of the fundamental domain's points.
    With ``ring`` the domain is also drawn moved by each generator and its
    inverse.  Returns ``(svg_text, clipped_count)``.
    """
    pts = np.asarray(dev.points, dtype=float)
    if len(pts) == 0 or len(surface.cells) == 0:
        raise ValueError("nothing to draw: empty surface")
    layers = [pts]
    if ring:
        if hol is None:
            raise ValueError("the deck ring needs holonomy")
        for g in hol.generators:
            for m in (g, np.linalg.inv(g)):
                layers.append(pts @ np.linalg.inv(m).T)
    if chart is None:
        chart = auto_chart(pts)
    projected = [project_chart(p, chart) for p in layers]
    kept = [xy[k] for xy, k in projected]
    clipped = int(sum(int((~k).sum()) for _, k in projected))
    allxy = np.concatenate(kept) if kept else np.zeros((0, 2))
    if len(allxy) == 0:
        raise ValueError("all points are clipped by the chart")
    lo, hi = allxy.min(axis=0), allxy.max(axis=0)
    scale = (size - 20) / max(float((hi - lo).max()), 1e-300)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">']
    for li, (xy, keep) in enumerate(projected):
        colour = "#1f4e79" if li == 0 else "#9a9a9a"
        out.append(f'<g fill="none" stroke="{colour}" stroke-width="0.5">')
        for cell in surface.cells:
            if not keep[cell].all():
                continue
            ring_pts = [xy[c] for c in list(cell) + [cell[0]]]
            coords = " ".join(f"{10 + (p[0] - lo[0]) * scale:.4f},{size - 10 - (p[1] - lo[1]) * scale:.4f}"
                              for p in ring_pts)
            out.append(f'<polyline points="{coords}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n", clipped


def boundary_copies(surface):
    """Copies on the boundary of the unglued triangulation."""
    count = {}
    for cell in surface.cells:
        for i in range(3):
            e = tuple(sorted((int(cell[i]), int(cell[(i + 1) % 3]))))
            count[e] = count.get(e, 0) + 1
    return np.array(sorted({c for e, k in count.items() if k == 1 for c in e}))


def hull_ratio(surface, dev, chart=None):
    """Hull area of all developed points over hull area of the boundary points."""
    xy, keep = project_chart(dev.points, chart)
    bnd = boundary_copies(surface)
    bnd = bnd[keep[bnd]]
    return float(ConvexHull(xy[keep]).volume / ConvexHull(xy[bnd]).volume)


# ---------------------------------------------------------------------------
# inputs


def _floats(text, count=None):
    vals = [float(t) for t in text.split(",")]
    if count is not None and len(vals) != count:
        raise UsageError(f"expected {count} comma-separated numbers, got {text!r}")
    return vals


def _load_scalar(path, n):
    with open(path) as fh:
        doc = json.load(fh)
    vals = doc["values"] if isinstance(doc, dict) else doc
    arr = np.asarray(vals, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"expected {n} values, got shape {arr.shape}")
    return arr


def _cubic_from_args(args, surface):
    if getattr(args, "cubic", None):
        w = cubic.CubicDifferential.from_json(io.load(args.cubic, "cubic/1"))
        if len(w.coeff) != surface.n:
            raise ValueError("cubic differential does not match the surface")
        return w
    a, b = _floats(getattr(args, "cubic_const", None) or ("1,0" if surface.k0 == 0 else "0,0"), 2)
    return cubic.CubicDifferential.constant(surface, complex(a, b))


def _structure_from_dir(path):
    doc = io.load(os.path.join(path, "summary.json"), "summary/1")
    spec = doc["provenance"]["surface_spec"]
    surface = sf.build(spec)
    mu = wang.WangResult.from_json(io.load(os.path.join(path, "wang.json"), "wang/1")).mu
    w = cubic.CubicDifferential.from_json(io.load(os.path.join(path, "cubic.json"), "cubic/1"))
    g = np.exp(2 * mu)
    gamma = cn.levi_civita(surface, g) + cubic.a_operator(surface, g, w)
    return spec, surface, cn.StructureData(surface, mu, gamma)


def _write(path, doc):
    if path:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        io.save(path, doc)


def _summary(command, passed, certificates=None, provenance=None, **extra):
    doc = {"version": "summary/1", "command": command, "passed": bool(passed),
           "certificates": certificates or {}, "provenance": provenance or {}}
    doc.update(extra)
    return doc


# ---------------------------------------------------------------------------
# commands


def cmd_solve_wang(args):
    s = sf.build(args.surface)
    if args.f:
        f = _load_scalar(args.f, s.n)
        source = {"f": args.f}
    else:
        w = _cubic_from_args(args, s)
        f = cubic.norm_G(s, None, w)
        source = {"cubic": args.cubic or args.cubic_const}
    res = wang.solve_wang(s, f, tol=args.tol, max_iter=args.max_iter)
    apr = wang.apriori_check(s, res.mu, f)
    _write(args.out, res.to_json())
    certs = {"residual": {"value": res.residual, "threshold": args.tol, "passed": res.residual <= args.tol},
             "apriori": {"passed": apr["passed"], "gap_at_min": apr["gap_at_min"],
                         "gap_at_max": apr["gap_at_max"]}}
    ok = all(c["passed"] for c in certs.values())
    return ok, _summary("solve-wang", ok, certs, dict(surface_spec=args.surface, tol=args.tol, **source),
                        iters=res.iters)


def _forward(args):
    s = sf.build(args.surface)
    w = _cubic_from_args(args, s)
    return s, w, pl.forward(s, w, tol=args.tol)


def cmd_pipeline(args):
    s, w, res = _forward(args)
    out = args.out
    os.makedirs(out, exist_ok=True)
    io.save(os.path.join(out, "surface.json"), sf.to_json(s))
    io.save(os.path.join(out, "cubic.json"), w.to_json())
    io.save(os.path.join(out, "wang.json"), res.wang_result.to_json())
    io.save(os.path.join(out, "residuals.json"),
            {"version": "residuals/1", "certificates": res.certificates})
    io.save(os.path.join(out, "holonomy.json"), res.holonomy.to_json())
    io.save(os.path.join(out, "developed.json"), res.developed.to_json())
    summ = res.summary(timings=args.timings)
    summ["command"] = "pipeline"
    summ["provenance"]["surface_spec"] = args.surface
    io.save(os.path.join(out, "summary.json"), summ)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(pl.summary_text(res))
    try:
        svg, _ = export_svg(s, res.developed, hol=res.holonomy)
        with open(os.path.join(out, "developed.svg"), "w") as fh:
            fh.write(svg)
    except ValueError as err:
        sys.stderr.write(f"warning: no SVG written: {err}\n")
    return res.passed, summ


def cmd_check(args):
    s = sf.build(args.surface)
    w = _cubic_from_args(args, s)
    f = cubic.norm_G(s, None, w)
    res = wang.solve_wang(s, f, tol=args.tol)
    g = np.exp(2 * res.mu)
    gamma = cn.levi_civita(s, g) + cubic.a_operator(s, g, w)
    st = cn.StructureData(s, res.mu, gamma)
    raw = dict(st.condition_E())
    raw["holomorphicity"] = cubic.holomorphicity_residual(s, None, w)
    base = pl.baseline(s)
    certs = {k: {"value": float(v), "threshold": max(10 * base[k], pl.FLOOR),
                 "passed": bool(v <= max(10 * base[k], pl.FLOOR))} for k, v in sorted(raw.items())}
    _write(args.out, {"version": "residuals/1", "certificates": certs})
    ok = all(c["passed"] for c in certs.values())
    return ok, _summary("check", ok, certs, {"surface_spec": args.surface})


def cmd_holonomy(args):
    _, _, res = _forward(args)
    _write(args.out, res.holonomy.to_json())
    det = res.certificates["det"]
    certs = {k: res.certificates[k] for k in ("det", "relation", "consistency")}
    return det["passed"] and certs["relation"]["passed"], _summary(
        "holonomy", all(c["passed"] for c in certs.values()), certs, {"surface_spec": args.surface})


def cmd_develop(args):
    s, _, res = _forward(args)
    _write(args.out, res.developed.to_json())
    extra = {}
    if args.svg:
        chart = None if args.chart == "auto" else _floats(args.chart, 3)
        svg, clipped = export_svg(s, res.developed, chart=chart,
                                  hol=res.holonomy, ring=args.ring)
        if clipped:
            sys.stderr.write(f"warning: {clipped} points clipped by the chart\n")
        with open(args.svg, "w") as fh:
            fh.write(svg)
        extra["clipped"] = clipped
    certs = {"convexity": res.certificates["convexity"],
             "equivariance": res.certificates["equivariance"]}
    ok = all(c["passed"] for c in certs.values())
    return ok, _summary("develop", ok, certs, {"surface_spec": args.surface}, **extra)


def cmd_normalize(args):
    spec, s, st = _structure_from_dir(args.structure)
    form = ma.ECohomologyForm.from_json(io.load(args.form, "eform/1"))
    closed = ma.closedness_residual(st, form)
    if args.mode == "hodge":
        rep, report = ma.hodge_representative(st, form)
        certs = {"trace": {"value": report["trace"], "threshold": args.tol,
                           "passed": report["trace"] <= args.tol},
                 "anticommute": {"value": report["anticommute"], "threshold": args.tol,
                                 "passed": report["anticommute"] <= args.tol}}
        doc = rep.to_json()
    else:
        j, rep, report = ma.complex_structure_representative(st, form, tol=args.tol)
        certs = {"J2": {"value": report["J2_residual"], "threshold": 1e-6,
                        "passed": report["J2_residual"] <= 1e-6}}
        doc = rep.to_json()
        doc["J"] = j.tolist()
    _write(args.out, doc)
    ok = all(c["passed"] for c in certs.values())
    return ok, _summary("normalize-cohomology", ok, certs,
                        {"surface_spec": spec, "mode": args.mode}, closedness=closed)


def _cone(text):
    if text == "octant":
        return np.eye(3)
    rows = [_floats(r, 3) for r in text.split(";")]
    return np.array(rows, dtype=float).T


def cmd_vinberg(args):
    val = dv.vinberg_characteristic(_cone(args.cone), _floats(args.x, 3))
    print(repr(float(val)))
    return True, _summary("vinberg", True, {}, {"cone": args.cone, "x": args.x}, value=val)


def cmd_geodesic(args):
    s = sf.build(args.surface)
    w = _cubic_from_args(args, s)
    res = wang.solve_wang(s, cubic.norm_G(s, None, w), tol=args.tol)
    g = np.exp(2 * res.mu)
    gamma = cn.levi_civita(s, g) + cubic.a_operator(s, g, w)
    rng = np.random.default_rng(args.seed)
    runs = []
    for _ in range(args.count):
        c = s.cells[rng.integers(len(s.cells))]
        bary = rng.dirichlet(np.ones(3))
        x0 = complex(*(bary @ s.copy_pos[c]))
        ang = rng.uniform(0, 2 * math.pi)
        out = dv.trace_geodesic(s, gamma, x0, (math.cos(ang), math.sin(ang)), args.T, args.dt)
        runs.append({"x0": [x0.real, x0.imag], "angle": ang, "ratio_max": out["ratio_max"],
                     "K": out["K"], "length": out["length"], "truncated": out["truncated"],
                     "passed": bool(out["ratio_max"] <= out["K"] * 1.05)})
    _write(args.out, {"version": "summary/1", "geodesics": runs})
    ok = all(r["passed"] for r in runs)
    certs = {"lipschitz": {"passed": ok, "worst_ratio": max((r["ratio_max"] / max(r["K"], 1e-300)
                                                              for r in runs), default=0.0)}}
    return ok, _summary("geodesic", ok, certs, {"surface_spec": args.surface, "seed": args.seed})


def cmd_ma_solve(args):
    if args.op == "hmu":
        s = sf.build(args.surface)
        op = ma.operator_Hmu_op(s, args.b * np.eye(2), cn.levi_civita(s))
    else:
        if not args.structure:
            raise UsageError("--op d needs --structure")
        _, s, st = _structure_from_dir(args.structure)
        u = np.zeros((s.n, 3))
        u[:, 2] = 1.0
        sec = ma.section_data(s, st.omega, u, 2 * st.phi)
        op = ma.operator_D_op(s, sec, geometric=args.geometric)
    try:
        target = np.full(s.n, float(args.target))
    except ValueError:
        target = _load_scalar(args.target, s.n)
    res = ma.solve_MA(op, target, tol=args.tol, positive=(args.op == "d"))
    certs = {"residual": {"value": res.residual, "threshold": args.tol,
                          "passed": res.residual <= args.tol},
             "ellipticity": {"passed": min(res.min_g_history) > 0,
                             "min_G": min(res.min_g_history)}}
    if op.name in ("Hmu", "D"):
        apr = ma.apriori_MA_check(op, res.f, target)
        certs["apriori"] = {"passed": apr["passed"], "window": apr["window"]}
    _write(args.out, {"version": "summary/1", "f": res.f.tolist(), "iters": res.iters})
    ok = all(c["passed"] for c in certs.values())
    return ok, _summary("ma-solve", ok, certs, {"op": args.op}, iters=res.iters)


# ---------------------------------------------------------------------------
# parser


def _add_cubic(p):
    p.add_argument("--cubic-const", help="constant cubic differential a,b meaning (a + ib) dz^3")
    p.add_argument("--cubic", help="cubic differential JSON (cubic/1)")


def build_parser():
    parser = _Parser(prog="rp2struct", description="Convex RP^2 structures from cubic differentials.")
    parser.add_argument("--config", help="key=value file of option defaults (flags override)")
    parser.add_argument("--summary", help="write the summary JSON here instead of stdout")
    parser.add_argument("--timings", action="store_true", help="include wall-times in summaries")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve-wang", help="solve the Wang equation")
    p.add_argument("--surface", required=True)
    p.add_argument("--f", help="right-hand side JSON (list or {values: [...]})")
    _add_cubic(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_wang)

    for name, func, help_text in (("pipeline", cmd_pipeline, "forward pipeline with all artifacts"),
                                  ("check", cmd_check, "Condition E residual certificates"),
                                  ("holonomy", cmd_holonomy, "holonomy generators"),
                                  ("develop", cmd_develop, "developing map and SVG")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--surface", required=True)
        _add_cubic(p)
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--out", required=(name == "pipeline"))
        if name == "develop":
            p.add_argument("--svg")
            p.add_argument("--chart", default="auto", help="chart covector a,b,c or 'auto'")
            p.add_argument("--ring", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("normalize-cohomology", help="Hodge or complex-structure representative")
    p.add_argument("--mode", choices=["hodge", "complex"], required=True)
    p.add_argument("--form", required=True)
    p.add_argument("--structure", required=True, help="pipeline output directory")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("vinberg", help="characteristic function of a simplicial cone")
    p.add_argument("--cone", default="octant", help="'octant' or rows 'a,b,c;d,e,f;g,h,i' of generators")
    p.add_argument("--x", required=True)
    p.set_defaults(func=cmd_vinberg)

    p = sub.add_parser("geodesic", help="random geodesics with Lipschitz diagnostics")
    p.add_argument("--surface", required=True)
    _add_cubic(p)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("ma-solve", help="Monge-Ampere Newton solve")
    p.add_argument("--op", choices=["hmu", "d"], required=True)
    p.add_argument("--surface", default="torus:16,i")
    p.add_argument("--structure", help="pipeline output directory (for --op d)")
    p.add_argument("--geometric", action="store_true")
    p.add_argument("--b", type=float, default=1.0, help="B = b I for --op hmu")
    p.add_argument("--target", default="4")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ma_solve)
    return parser


def _read_config(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"bad config line {line!r}")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _apply_config(parser, argv, args):
    conf = _read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    types = {a.dest: a.type for a in sub._actions}
    defaults = {k: (types.get(k) or str)(v) for k, v in conf.items() if k in types}
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            args = _apply_config(parser, argv, args)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        ok, summary = args.func(args)
    except UsageError as err:
        sys.stderr.write(f"usage error: {err}\n")
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, KeyError, io.SchemaError) as err:
        sys.stderr.write(f"error: {err}\n")
        summary = _summary(args.command, False, error=str(err))
        _emit(args, summary, force=True)
        return EXIT_ERROR
    _emit(args, summary)
    return EXIT_OK if ok else EXIT_CERT


def _emit(args, summary, force=False):
    if args.summary:
        _write(args.summary, summary)
    elif args.command != "vinberg" or force:
        sys.stdout.write(io.dumps(summary))


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
