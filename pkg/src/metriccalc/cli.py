"""metriccalc command line.

Every subcommand reads one JSON config (``--config``), applies the flag
overrides, writes ``<subcommand>.json`` or ``<subcommand>.csv`` plus
``run.json`` into ``--out`` and exits with 0 (ok), 1 (usage or input error)
or 2 (an invariant failed; the witnesses go to ``violations.json``).
"""
from __future__ import annotations

import argparse
import ast
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, derivation as dv, io, lipcalc, mds, modalg, space as sp

SUBCOMMANDS = ("space", "lip", "derive", "stratify", "atlas", "check-ineq", "sobolev",
               "probe-dim")


class UsageError(Exception):
    pass


# -- expressions --------------------------------------------------------------

_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
          "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "minimum": np.minimum,
          "maximum": np.maximum, "clip": np.clip, "where": np.where}
_CONSTS = {"pi": np.pi, "e": np.e}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.USub, ast.UAdd,
          ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE)


def eval_expr(text, space):
    """Evaluate a numpy expression in the coordinates x, y, z (or x0, x1, ...)."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"bad expression {text!r}: {exc.msg}") from exc
    env = dict(_CONSTS)
    if space.coords is not None:
        for k in range(space.dim):
            env[f"x{k}"] = space.coords[:, k]
            if k < 3:
                env["xyz"[k]] = space.coords[:, k]
    env["i"] = np.arange(space.n, dtype=float)
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise UsageError(f"expression {text!r} uses unsupported syntax "
                             f"{type(node).__name__}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                               and node.func.id in _FUNCS):
            raise UsageError(f"expression {text!r} calls an unknown function")
        if isinstance(node, ast.Name) and node.id not in env and node.id not in _FUNCS:
            raise UsageError(f"expression {text!r} uses unknown name {node.id!r}")
    with np.errstate(all="ignore"):
        vals = eval(compile(tree, "<expr>", "eval"), {"__builtins__": {}}, {**_FUNCS, **env})
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (space.n,)).copy()
    if not np.all(np.isfinite(vals)):
        raise UsageError(f"expression {text!r} is not finite everywhere")
    return vals


# -- config resolution --------------------------------------------------------

def _space(cfg):
    spec = cfg.get("space", {"kind": "grid", "dim": 2, "side": 64})
    if isinstance(spec, str):
        spec = {"kind": "from_file", "path": spec}
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind is None:
        raise UsageError("space spec needs a 'kind'")
    try:
        return sp.make_space(kind, **spec)
    except TypeError as exc:
        raise UsageError(f"bad parameters for space {kind!r}: {exc}") from exc
    except KeyError as exc:
        raise UsageError(f"space {kind!r} needs parameter {exc}") from exc


def _ladder(cfg, space):
    spec = cfg.get("ladder")
    if spec in (None, "default"):
        return sp.ScaleLadder.default(space)
    if isinstance(spec, list):
        return sp.ScaleLadder(tuple(float(r) for r in spec))
    parts = str(spec).split(":")
    if len(parts) != 3:
        raise UsageError(f"ladder must be r0:ratio:floor, got {spec!r}")
    h = float(np.median(space.nn_dist))
    vals = []
    for p in parts:
        p = p.strip()
        try:
            vals.append(float(p[:-1] or 1) * h if p.endswith("h") else float(p))
        except ValueError as exc:
            raise UsageError(f"bad ladder entry {p!r}") from exc
    return sp.ScaleLadder.geometric(*vals)


def _field(spec, space, k):
    if isinstance(spec, str):
        spec = {"expr": spec}
    if "expr" in spec:
        return spec.get("name", spec["expr"]), eval_expr(spec["expr"], space)
    if "coordinate" in spec:
        a = int(spec["coordinate"])
        return spec.get("name", f"coord{a}"), sp.coordinate(space, a).values
    if "landmark" in spec:
        p = int(spec["landmark"])
        return spec.get("name", f"landmark{p}"), sp.landmark_generators(space, [p])[0].values
    if "csv" in spec:
        return spec.get("name", f"csv{k}"), io.read_field_csv(spec["csv"], space.n)
    if "constant" in spec:
        return spec.get("name", f"const{k}"), np.full(space.n, float(spec["constant"]))
    raise UsageError(f"cannot read field spec {spec!r}")


def _fields(specs, space):
    out = [_field(s, space, k) for k, s in enumerate(specs)]
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise UsageError("field names must be distinct")
    return names, [sp.ScalarField(v, space) for _, v in out]


def _default_fields(space):
    if space.coords is None:
        return [{"landmark": 0}]
    return [{"coordinate": k} for k in range(space.dim)]


def _generators(cfg, space):
    spec = cfg.get("generators")
    if spec is None:
        if space.meta.get("kind") == "grid":
            spec = {"landmarks": "corners"}
        else:
            spec = {"landmarks": [0, space.n - 1]}
    if isinstance(spec, dict) and "landmarks" in spec:
        lm = spec["landmarks"]
        if lm == "corners":
            corners = sp.grid_corners(space)
            lm = corners[:spec.get("count", space.dim + 1)]
        lm = [int(p) for p in lm]
        fields = sp.landmark_generators(space, lm)
        return [f"landmark{p}" for p in lm], fields
    return _fields(spec, space)


def _derivations(cfg, space, seed):
    spec = cfg.get("derivations")
    if spec is None:
        if space.meta.get("kind") == "grid":
            spec = [{"scheme": "axis", "dim": k} for k in range(space.dim)]
        else:
            spec = [{"scheme": "knn", "k": 4}]
    out = []
    for k, s in enumerate(spec):
        s = dict(s)
        if "stencil" in s and "scheme" not in s:
            out.append(dv.load_stencil(space, s["stencil"]))
            continue
        scheme = s.pop("scheme", None)
        normalize = s.pop("normalize", True)
        s.pop("name", None)
        if scheme == "knn":
            s.setdefault("seed", seed + k)
        try:
            out.append(dv.dq_derivation(space, scheme, normalize=normalize, **s))
        except TypeError as exc:
            raise UsageError(f"bad parameters for derivation {scheme!r}: {exc}") from exc
    return out


def _table(cfg):
    spec = cfg["table"]
    if isinstance(spec, str):
        rows = []
        with open(spec) as fh:
            next(fh)
            for line in fh:
                i, k, x, v = line.strip().split(",")
                rows.append((int(i), int(k), int(x), float(v)))
        N, K, n = (max(r[c] for r in rows) + 1 for c in range(3))
        V = np.zeros((N, K, n))
        for i, k, x, v in rows:
            V[i, k, x] = v
        return V
    return np.asarray(spec, dtype=float)


def _points(cfg, space):
    spec = cfg.get("points")
    if spec is None:
        return None
    if spec == "interior":
        if space.coords is None:
            raise UsageError("'interior' needs a coordinate space")
        lo, hi = space.coords.min(axis=0), space.coords.max(axis=0)
        return np.flatnonzero(np.all((space.coords > lo) & (space.coords < hi), axis=1))
    return np.asarray(spec, dtype=np.int64)


# -- subcommands --------------------------------------------------------------

def cmd_space(cfg, ctx):
    space = ctx["space"]
    prof = sp.doubling_profile(space, cfg.get("sample_count", 200), seed=ctx["seed"])
    tri = sp.triangle_violation(space, seed=ctx["seed"])
    report = {
        "n": space.n, "mass": float(space.weights.sum()), "diameter": space.diameter,
        "nn_median": float(np.median(space.nn_dist)),
        "doubling": {"C": prof.C, "kappa": prof.kappa, "slope": prof.slope,
                     "pairs": prof.pairs, "degenerate": prof.degenerate},
        "ladder": list(ctx["ladder"].radii),
        "space": sp.space_to_dict(space),
    }
    viol = [] if tri is None else [{"triangle": list(tri)}]
    return {"space.json": report}, viol


def cmd_lip(cfg, ctx):
    space, ladder = ctx["space"], ctx["ladder"]
    names, fields = ctx["fields"]
    which = cfg.get("field", names[0])
    if which not in names:
        raise UsageError(f"unknown field {which!r}")
    f = fields[names.index(which)]
    prof = lipcalc.lip_profile(space, f, ladder)
    viol = []
    big, small = prof.biglip_at, prof.smllip_at
    with np.errstate(invalid="ignore"):
        # radii decrease along the ladder: upper may only shrink, lower only grow
        bad = np.argwhere((np.diff(big, axis=1) > 0) | (np.diff(small, axis=1) < 0))
    for x, k in bad[:20]:
        viol.append({"monotonicity": [int(x), float(ladder.radii[k])]})
    for x in np.flatnonzero(prof.smllip > prof.biglip)[:20]:
        viol.append({"lower_above_upper": int(x)})
    return {"lip.csv": (["point", "r", "varlip", "upper", "lower"], prof.rows())}, viol


def cmd_derive(cfg, ctx):
    space = ctx["space"]
    ders = ctx["derivations"]
    gnames, gens = ctx["generators"]
    fnames, fields = ctx["fields"]
    table = dv.component_table(ders, gens)
    viol, info = [], []
    one = sp.constant(space, 1.0)
    for i, D in enumerate(ders):
        c = D(one).values
        if np.any(c != 0):
            viol.append({"derivation": i, "constant_not_annihilated": int(np.flatnonzero(c)[0])})
        leib = []
        for a in range(len(fields)):
            for b in range(a, len(fields)):
                R, closed, ok = dv.leibniz_residual(D, fields[a], fields[b])
                gap = float(np.abs(R.values - closed.values).max(initial=0.0))
                leib.append({"f": fnames[a], "g": fnames[b], "max_residual":
                             float(np.abs(R.values).max(initial=0.0)), "closed_form_gap": gap,
                             "bound_ok": ok})
                if not ok:
                    viol.append({"derivation": i, "leibniz_bound": [fnames[a], fnames[b]]})
        info.append({"reach": D.reach, "weight_mass": float(D.weight_mass.max(initial=0.0)),
                     "leibniz": leib})
    rows = ((i, gnames[k], x, v) for i, k, x, v in table.rows())
    return {"derive.csv": (["derivation", "generator", "point", "value"], rows),
            "derive.json": {"derivations": info, "generators": gnames}}, viol


def cmd_stratify(cfg, ctx):
    tau = cfg.get("tau", modalg.DEFAULT_TAU)
    if "table" in cfg:
        V = _table(cfg)
    else:
        V = dv.component_table(ctx["derivations"], ctx["generators"][1]).values
    strat = modalg.stratify(table=V, tau=tau)
    viol = []
    if np.any(strat.rank > V.shape[1]):
        viol.append({"rank_exceeds_generators": int(np.flatnonzero(strat.rank > V.shape[1])[0])})
    return {"stratify.json": strat.to_dict()}, viol


def _atlas(cfg, ctx):
    tau = cfg.get("tau", modalg.DEFAULT_TAU)
    gnames, gens = ctx["generators"]
    return mds.build_atlas(ctx["space"], gens, ctx["derivations"], tau,
                           cfg.get("eps_floor", 1e-3))


def cmd_atlas(cfg, ctx):
    space = ctx["space"]
    gnames, gens = ctx["generators"]
    ders = ctx["derivations"]
    try:
        atlas = _atlas(cfg, ctx)
    except mds.AtlasError as exc:
        return {}, [{"atlas": str(exc)}]
    fnames, fields = ctx["fields"]
    probes = list(fields) + list(gens)
    free = mds.atlas_freeness(space, atlas, ders, probes)
    doc = atlas.to_dict()
    for c in doc["charts"]:
        c["functions"] = [gnames[j] for j in c["functions"]]
    doc["freeness_residual"] = free
    doc["generators"] = gnames
    viol = []
    if atlas.dimension > len(ders):
        viol.append({"dimension_exceeds_derivations": atlas.dimension})
    if free > 1e-6:
        viol.append({"freeness_residual": free})
    uncovered = np.flatnonzero(atlas.chart_index(space.n) < 0)
    if len(uncovered):
        viol.append({"uncovered": uncovered.tolist()})
    out = {"atlas.json": doc}
    which = cfg.get("field", fnames[0] if fnames else None)
    if which is not None:
        f = fields[fnames.index(which)]
        rows = []
        method = cfg.get("method", "dual")
        for chart in atlas.charts:
            m = method if chart.record is not None else "lsq"
            t = mds.partial_derivatives(space, f, chart, gens, m, cfg.get("lsq_radius"),
                                        ctx["ladder"])
            rows.extend(t.rows())
        rows.sort(key=lambda r: (r[0], r[1]))
        out["atlas.csv"] = (["point", "j", "value", "residual"], rows)
    return out, viol


def cmd_check_ineq(cfg, ctx):
    names, fields = ctx["fields"]
    rep = mds.inequality_report(ctx["space"], ctx["derivations"], fields, ladder=ctx["ladder"])
    doc = rep.to_dict()
    doc["corpus"] = names
    viol = [{"upper": list(v)} for v in rep.upper_violations[:50]]
    viol += [{"reverse": list(v)} for v in rep.reverse_violations[:50]]
    return {"check-ineq.json": doc}, viol


def cmd_sobolev(cfg, ctx):
    space = ctx["space"]
    names, fields = ctx["fields"]
    mode = cfg.get("atlas", "coordinates" if space.coords is not None else "build")
    if mode == "coordinates":
        coords = [sp.coordinate(space, k) for k in range(space.dim)]
        atlas = mds.Atlas.single(space, coords)
        method = "lsq"
    elif mode == "build":
        atlas = _atlas(cfg, ctx)
        method = cfg.get("method", "dual")
    else:
        raise UsageError(f"atlas must be 'coordinates' or 'build', got {mode!r}")
    p = float(cfg.get("p", 2.0))
    res = {}
    for name, f in zip(names, fields):
        if method == "dual":
            g = np.zeros(space.n)
            for chart in atlas.charts:
                m = "dual" if chart.record is not None else "lsq"
                v = mds.differential(space, f, chart, atlas.generators, m, cfg.get("lsq_radius"),
                                     ctx["ladder"])
                g[v.points] = mds.cot_norm(space, v, atlas.generators, ladder=ctx["ladder"])
        else:
            g = mds.df_norm_field(space, f, atlas, "lsq", cfg.get("lsq_radius"), ctx["ladder"])
        w = space.weights
        lp = float(np.sum(w * np.abs(f.values) ** p) ** (1 / p))
        dn = float(np.sum(w * g**p) ** (1 / p))
        res[name] = {"value": lp + dn, "lp": lp, "differential": dn}
    return {"sobolev.json": {"p": p, "atlas": mode, "fields": res}}, []


def cmd_probe_dim(cfg, ctx):
    names, fields = ctx["fields"]
    rep = mds.dimension_probe(ctx["space"], ctx["derivations"], fields, cfg.get("tau"),
                              ctx["ladder"], _points(cfg, ctx["space"]))
    doc = rep.to_dict()
    doc["candidates"] = names
    return {"probe-dim.json": doc}, []


COMMANDS = {"space": cmd_space, "lip": cmd_lip, "derive": cmd_derive, "stratify": cmd_stratify,
            "atlas": cmd_atlas, "check-ineq": cmd_check_ineq, "sobolev": cmd_sobolev,
            "probe-dim": cmd_probe_dim}


# -- driver -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="metriccalc", description="First-order calculus on finite metric "
                "measure spaces.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", default="metriccalc-out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for sampled procedures (unsigned 64-bit)")
    p.add_argument("--tau", type=float, help="threshold for the subcommand")
    p.add_argument("--ladder", help="scale ladder r0:ratio:floor (entries may end in h, the "
                   "median nearest-neighbour distance)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def resolve_config(args):
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    if not 0 <= int(cfg["seed"]) < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    if args.tau is not None:
        cfg["tau"] = args.tau
    if args.ladder is not None:
        cfg["ladder"] = args.ladder
    return cfg


def _context(cmd, cfg):
    space = _space(cfg)
    seed = int(cfg["seed"])
    ctx = {"space": space, "seed": seed, "ladder": _ladder(cfg, space)}
    if cmd in ("lip", "derive", "atlas", "check-ineq", "sobolev", "probe-dim"):
        ctx["fields"] = _fields(cfg.get("fields", _default_fields(space)), space)
    if cmd in ("derive", "stratify", "atlas", "check-ineq", "probe-dim", "sobolev") \
            and "table" not in cfg:
        ctx["derivations"] = _derivations(cfg, space, seed)
    if cmd in ("derive", "stratify", "atlas", "sobolev") and "table" not in cfg:
        ctx["generators"] = _generators(cfg, space)
    return ctx


def _write(outdir, name, payload):
    path = outdir / name
    if name.endswith(".csv"):
        header, rows = payload
        io.write_csv(path, header, rows)
    else:
        io.write_json(path, payload)


def run(cmd, cfg, outdir):
    """Execute one subcommand; returns the exit code."""
    if cmd not in COMMANDS:
        raise UsageError(f"unknown subcommand {cmd!r}")
    outdir = Path(outdir)
    if "table" in cfg and cmd == "stratify":
        ctx = {"seed": int(cfg["seed"])}
    else:
        ctx = _context(cmd, cfg)
    outputs, viol = COMMANDS[cmd](cfg, ctx)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, payload in outputs.items():
        _write(outdir, name, payload)
    resolved = dict(cfg)
    if "ladder" in ctx:
        resolved["ladder_radii"] = list(ctx["ladder"].radii)
    status = "violation" if viol else "ok"
    io.write_json(outdir / "run.json", {"subcommand": cmd, "config": resolved, "status": status,
                                        "outputs": sorted(outputs), "version": __version__})
    vpath = outdir / "violations.json"
    if viol:
        io.write_json(vpath, {"subcommand": cmd, "violations": viol})
        return 2
    if vpath.exists():
        vpath.unlink()
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return run(args.subcommand, cfg, args.out)
    except (UsageError, sp.SpaceError, dv.DerivationError, ValueError, KeyError, OSError,
            modalg.RankError) as exc:
        print(f"metriccalc {args.subcommand}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
