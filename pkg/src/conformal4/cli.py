"""Command-line front end.

Every command writes one report (JSON by default, CSV with ``--format csv``)
to ``--out`` or stdout.  Exit status: 0 success, 2 precondition failure,
3 non-convergence (the report is still written), 4 parse error.  Errors are
also printed to stderr as a JSON object.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import decomposition as dec
from . import discretization as dz
from . import geometry as geo
from . import gluing as gl
from . import integration as itg
from . import manifolds as mf
from . import yamabe as ym
from .errors import Conformal4Error, ConvergenceError, ParseError, PreconditionError

COMMANDS = ("curvature", "decompose", "gbchern", "invariant", "pic", "yamabe", "glue", "catalog")
CSV_VERSION = 1
DEFAULT_POINTS = 64
DEFAULT_M = {"gbchern": 48, "invariant": 32, "catalog": 24}
CATALOG_ROWS = ("s4", "cp2", "cp2bar", "t4", "s3xs1", "s2xs2")
COMPUTED, ASSERTED = "computed", "paper-asserted"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(f"command line: {message}")


# ------------------------------------------------------------------ helpers


def _plain(obj):
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def canonical_json(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def recipe_hash(recipe):
    body = {k: v for k, v in recipe.items() if k != "out"}
    text = json.dumps(_plain(body), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _load_json(path, what):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {what} {str(path)!r}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {what} {Path(path).name}: {exc.msg}", position=exc.pos) from None


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], out)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, obj))
    return out


def _key_value_csv(result):
    return _csv_text(("key", "value"), _flatten("", _plain(result), []))


# ------------------------------------------------------------------ recipes


def normalize_recipe(raw):
    """Fill defaults and inline the config file so the recipe hash covers its content."""
    cmd = raw.get("command")
    if cmd not in COMMANDS:
        raise ParseError(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    config = raw.get("config") or {}
    if isinstance(config, str):
        config = _load_json(config, "config file")
    if not isinstance(config, dict):
        raise ParseError("config must be a JSON object")
    fmt = raw.get("format") or "json"
    if fmt not in ("json", "csv"):
        raise ParseError(f"unknown format {fmt!r}")
    orientation = raw.get("orientation")
    if orientation not in (None, "+", "-"):
        raise ParseError(f"orientation must be '+' or '-', got {orientation!r}")
    sigma_mode = raw.get("sigma_mode") or "full"
    if sigma_mode not in ("full", "plus"):
        raise ParseError(f"sigma mode must be 'full' or 'plus', got {sigma_mode!r}")
    manifold = raw.get("manifold")
    if manifold is None and cmd not in ("glue", "catalog"):
        raise ParseError(f"command {cmd!r} needs --manifold")
    if isinstance(manifold, str) and (manifold.endswith(".json") or "/" in manifold):
        manifold = {"file": manifold, "document": _load_json(manifold, "manifold file")}
    res = raw.get("resolution")
    if res is not None:
        try:
            res = int(res)
        except (TypeError, ValueError):
            raise ParseError(f"resolution must be an integer, got {res!r}") from None
    return {
        "command": cmd,
        "manifold": manifold,
        "resolution": res,
        "config": config,
        "format": fmt,
        "orientation": orientation,
        "sigma_mode": sigma_mode,
        "out": raw.get("out"),
    }


def _spec(recipe, ref=None):
    ref = recipe["manifold"] if ref is None else ref
    params = dict(recipe["config"].get("params", {}))
    if isinstance(ref, dict):
        spec = mf.spec_from_dict(ref["document"])
    else:
        try:
            spec = mf.resolve(ref, **params)
        except TypeError as exc:
            raise ParseError(f"bad manifold parameters {params}: {exc}") from None
    if recipe["orientation"] is not None:
        spec = spec.with_orientation(1 if recipe["orientation"] == "+" else -1)
    return spec


def _sample_points(spec, config):
    n = int(config.get("points", DEFAULT_POINTS))
    if n < 1:
        raise PreconditionError("need at least one sample point")
    rng = np.random.default_rng(int(config.get("seed", 0)))
    return spec.charts[spec.pointwise_chart].sample(n, rng)


def _sample_meta(spec, config, x):
    return {
        "chart": spec.charts[spec.pointwise_chart].name,
        "points": int(x.shape[0]),
        "seed": int(config.get("seed", 0)),
    }


# ----------------------------------------------------------------- commands


def cmd_curvature(recipe):
    spec = _spec(recipe)
    x = _sample_points(spec, recipe["config"])
    c = geo.curvature_at(spec, x)
    b = dec.decompose(c)
    cols = ("x0", "x1", "x2", "x3", "R", "ric0_norm2", "wplus_norm2", "wminus_norm2", "sigma", "bianchi_defect")
    bianchi = np.array([geo.bianchi_defect(c.riem[i]) for i in range(len(x))])
    data = np.column_stack([x, c.R, c.ric0_norm2, b.wplus_norm2, b.wminus_norm2, b.modified_scalar(recipe["sigma_mode"]), bianchi])
    result = {
        "manifold": spec.describe(),
        "sampling": _sample_meta(spec, recipe["config"], x),
        "columns": list(cols),
        "points": data,
        "ranges": {k: [float(data[:, i].min()), float(data[:, i].max())] for i, k in enumerate(cols) if i >= 4},
    }
    return result, _csv_text(cols, data.tolist()), 0


def cmd_decompose(recipe):
    spec = _spec(recipe)
    x = _sample_points(spec, recipe["config"])
    b = dec.decompose(geo.curvature_at(spec, x))
    cols = ("x0", "x1", "x2", "x3", "R", "lambda_max_plus", "lambda_max_minus", "wplus_norm2", "wminus_norm2", "sigma", "sigma_plus", "pic_margin")
    data = np.column_stack(
        [x, b.R, b.lambda_max_plus, b.lambda_max_minus, b.wplus_norm2, b.wminus_norm2, b.sigma, b.sigma_plus, b.pic_margin]
    )
    result = {
        "manifold": spec.describe(),
        "sampling": _sample_meta(spec, recipe["config"], x),
        "columns": list(cols),
        "points": data,
        "wplus_eigenvalues": b.wplus_eigs,
        "wminus_eigenvalues": b.wminus_eigs,
        "ranges": {k: [float(data[:, i].min()), float(data[:, i].max())] for i, k in enumerate(cols) if i >= 4},
    }
    return result, _csv_text(cols, data.tolist()), 0


def cmd_pic(recipe):
    spec = _spec(recipe)
    x = _sample_points(spec, recipe["config"])
    b = dec.decompose(geo.curvature_at(spec, x))
    verdict, margin = dec.pic_verdict(b)
    result = {
        "manifold": spec.describe(),
        "sampling": _sample_meta(spec, recipe["config"], x),
        "verdict": verdict,
        "margin": margin,
        "sigma_over_6_min": float(np.min(b.sigma) / 6.0),
    }
    return result, _key_value_csv(result), 0


def cmd_gbchern(recipe):
    spec = _spec(recipe)
    m = recipe["resolution"] or DEFAULT_M["gbchern"]
    rep = itg.report_with_convergence(spec, m, recipe["sigma_mode"])
    result = {"manifold": spec.describe(), **rep.to_dict()}
    return result, _key_value_csv(result), 0


def _yamabe_estimate(spec, recipe):
    cfg = recipe["config"]
    disc = dz.build_discretization(spec, cfg.get("solver_resolution"), recipe["sigma_mode"])
    return disc, ym.continuation_to_critical(
        disc,
        schedule=tuple(cfg.get("schedule", ym.DEFAULT_SCHEDULE)),
        tol=float(cfg.get("tol", 1e-9)),
        max_iter=int(cfg.get("max_iter", 4000)),
        symmetric=cfg.get("symmetric"),
    )


def cmd_invariant(recipe):
    spec = _spec(recipe)
    m = recipe["resolution"] or DEFAULT_M["invariant"]
    rep = itg.functional_report(spec, itg.build_quadrature(spec, m), recipe["sigma_mode"])
    cfg = recipe["config"]
    Y = cfg.get("yamabe_estimate")
    source, code, solver = None, 0, None
    if Y is None and not rep.einstein:
        try:
            disc, cont = _yamabe_estimate(spec, recipe)
        except PreconditionError as exc:
            source = f"unavailable: {exc}"
        else:
            solver = cont.summary()
            if cont.converged and cont.estimate is not None:
                Y = cont.estimate
            else:
                code = 3
                source = "unavailable: solver did not converge"
    cond = None
    if rep.einstein or Y is not None:
        cond = itg.theorem14_condition(spec, report=rep, Y=Y).to_dict()
    result = {
        "manifold": spec.describe(),
        "functionals": rep.to_dict(),
        "integral_pinching": cond,
        "integral_pinching_note": source,
        "solver": solver,
    }
    return result, _key_value_csv(result), code


def cmd_yamabe(recipe):
    spec = _spec(recipe)
    cfg = dict(recipe["config"])
    if recipe["resolution"] is not None:
        cfg["solver_resolution"] = recipe["resolution"]
    disc, cont = _yamabe_estimate(spec, {**recipe, "config": cfg})
    result = {
        "manifold": spec.describe(),
        "discretization": disc.describe(),
        **cont.summary(),
        "history_columns": list(ym.HISTORY_COLUMNS),
    }
    return result, ym.history_csv(cont.history), 0 if cont.converged else 3


def _piece_from(doc):
    kind = doc.get("profile", "round-sphere-4")
    if kind == "round-sphere-4":
        prof = gl.round_s4_profile(float(doc.get("radius", 1.0)))
    elif kind == "flat-ball":
        prof = gl.flat_profile(float(doc.get("r_max", 1.0)))
    else:
        raise ParseError(f"unknown piece profile {kind!r}; expected round-sphere-4 or flat-ball")
    return gl.make_piece(prof, float(doc.get("delta", 0.5)))


def cmd_glue(recipe):
    cfg = recipe["config"]
    pieces = cfg.get("pieces", [{}, {}])
    if not isinstance(pieces, list) or len(pieces) != 2:
        raise ParseError("glue recipe needs exactly two pieces")
    p1, p2 = (_piece_from(p) for p in pieces)
    rep = gl.verify_connected_sum(
        p1,
        p2,
        tuple(float(v) for v in cfg.get("l_schedule", (5.0, 10.0, 20.0, 40.0))),
        epsilon=float(cfg.get("epsilon", 1e-9)),
        s=float(cfg.get("s", 3.9)),
        h=float(cfg.get("h", 0.05)),
        symmetric=bool(cfg.get("symmetric", False)),
    )
    result = {"pieces": pieces, **rep.summary(), "csv_columns": list(gl.GLUE_COLUMNS)}
    code = 0 if all(r["converged"] for r in rep.rows) else 3
    return result, rep.csv(), code


def _sigma_range(spec, n=256, seed=0):
    x = spec.charts[spec.pointwise_chart].sample(n, np.random.default_rng(seed))
    b = dec.decompose(geo.curvature_at(spec, x))
    return [float(b.sigma.min()), float(b.sigma.max())], [float(b.sigma_plus.min()), float(b.sigma_plus.max())]


ASSERTIONS = {
    "s4": (None, None, "GY of the round class equals the computed F_f (conformally flat, Einstein)"),
    "cp2": ("GY(CP2)", 0.0, "supremum over conformal classes"),
    "cp2bar": ("GY_+(reversed CP2) > 0", None, "positivity only"),
    "t4": ("GY(T4)", 0.0, "supremum over conformal classes"),
    "s3xs1": ("GY(S3xS1) = Y(S4)", 8.0 * math.sqrt(6.0) * math.pi, "limit of conformally flat classes"),
    "s2xs2": (None, None, "no value asserted"),
}


def cmd_catalog(recipe):
    m = recipe["resolution"] or DEFAULT_M["catalog"]
    rows = []
    for name in CATALOG_ROWS:
        spec = mf.catalog(name)
        rep = itg.functional_report(spec, itg.build_quadrature(spec, m), "full")
        rep_p = itg.functional_report(spec, itg.build_quadrature(spec, m), "plus")
        srange, prange = _sigma_range(spec)
        label, value, note = ASSERTIONS[name]
        rows.append(
            {
                "manifold": name,
                "kind": spec.kind,
                "orientation": spec.orientation,
                "sigma_range": srange,
                "sigma_plus_range": prange,
                "sigma_provenance": COMPUTED,
                "F_f": rep.generalized_quotient,
                "F_f_plus": rep_p.generalized_quotient,
                "F_f_provenance": COMPUTED,
                "yamabe_quotient": rep.yamabe_quotient,
                "gy_label": label,
                "gy_value": value,
                "gy_provenance": ASSERTED if label else None,
                "note": note,
            }
        )
    result = {"quadrature_m": m, "rows": rows}
    cols = (
        "manifold", "sigma_min", "sigma_max", "sigma_plus_min", "sigma_plus_max",
        "F_f", "F_f_plus", "F_f_provenance", "gy_label", "gy_value", "gy_provenance",
    )
    table = [
        (
            r["manifold"], r["sigma_range"][0], r["sigma_range"][1], r["sigma_plus_range"][0], r["sigma_plus_range"][1],
            r["F_f"], r["F_f_plus"], r["F_f_provenance"], r["gy_label"] or "",
            "" if r["gy_value"] is None else r["gy_value"], r["gy_provenance"] or "",
        )
        for r in rows
    ]
    return result, _csv_text(cols, table), 0


HANDLERS = {
    "curvature": cmd_curvature,
    "decompose": cmd_decompose,
    "gbchern": cmd_gbchern,
    "invariant": cmd_invariant,
    "pic": cmd_pic,
    "yamabe": cmd_yamabe,
    "glue": cmd_glue,
    "catalog": cmd_catalog,
}


# --------------------------------------------------------------------- run


def run(raw_recipe):
    """Execute a recipe dict; returns ``(exit_code, report_text)``.  Raises package errors."""
    recipe = normalize_recipe(raw_recipe)
    result, csv_text, code = HANDLERS[recipe["command"]](recipe)
    if recipe["format"] == "csv":
        text = f"# conformal4 {__version__} csv-v{CSV_VERSION} {recipe['command']} recipe-sha256={recipe_hash(recipe)}\n" + csv_text
    else:
        report = {
            "tool": "conformal4",
            "version": __version__,
            "command": recipe["command"],
            "recipe": {k: v for k, v in recipe.items() if k != "out"},
            "recipe_sha256": recipe_hash(recipe),
            "status": "ok" if code == 0 else "non-convergence",
            "result": result,
        }
        text = canonical_json(report)
    if recipe["out"]:
        Path(recipe["out"]).write_text(text)
    return code, text


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--manifold", help="catalog name (s4, t4, s3xs1, cp2-fs, cp2bar, s2xs2) or JSON file")
    common.add_argument("--resolution", type=int, help="quadrature nodes per axis, or solver grid size")
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--orientation", choices=("+", "-"))
    common.add_argument("--sigma-mode", choices=("full", "plus"), default="full")
    p = _Parser(prog="conformal4", description="Conformal curvature invariants of explicit 4-manifold metrics.")
    p.add_argument("--version", action="version", version=f"conformal4 {__version__}")
    p.add_argument("--recipe", help="JSON recipe with the same keys as the flags plus 'command'")
    sub = p.add_subparsers(dest="command")
    for c in COMMANDS:
        sub.add_parser(c, parents=[common])
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if args.recipe:
            if args.command:
                raise ParseError("give either --recipe or a command, not both")
            raw = _load_json(args.recipe, "recipe")
            if not isinstance(raw, dict):
                raise ParseError("recipe must be a JSON object")
        elif args.command:
            raw = {
                "command": args.command,
                "manifold": args.manifold,
                "resolution": args.resolution,
                "config": args.config,
                "out": args.out,
                "format": args.format,
                "orientation": args.orientation,
                "sigma_mode": args.sigma_mode,
            }
        else:
            raise ParseError("no command given")
        code, text = run(raw)
    except Conformal4Error as exc:
        err = {**exc.to_dict(), "exit_code": exc.code}
        sys.stderr.write(canonical_json(err))
        return exc.code
    except Exception as exc:  # pragma: no cover - last-resort reporting
        sys.stderr.write(canonical_json({"error": "internal", "message": f"{type(exc).__name__}: {exc}", "exit_code": 1}))
        return 1
    if not raw.get("out"):
        sys.stdout.write(text)
    if code == 3:
        sys.stderr.write(canonical_json(ConvergenceError("solver did not reach tolerance; see report").to_dict() | {"exit_code": 3}))
    return code
