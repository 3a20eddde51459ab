"""Command line interface: ``daln validate|simulate|fit|residuals|study``.

Errors from the library are reported on standard error as
``ErrorName: message`` with exit code 1; usage errors exit with code 2.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .errors import DalnError
from .inference import fit_marginal, fit_mle
from .models import MODEL_CLASSES, IntensityModel, model_from_spec
from .residuals import (
    ks_exp1,
    mc_envelope,
    qq_table,
    residual_transform,
    residual_transform_marked,
)
from .simulation import SimulationConfig, simulate_replicates
from .study import StudyConfig, run_study


class UsageError(Exception):
    pass


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_arg(value: str) -> IntensityModel:
    """A model spec/fit JSON path, or a bare family name (parameters set to 1)."""
    p = Path(value)
    if p.exists():
        return io.load_model(p)
    if value in MODEL_CLASSES:
        if value == "multitype_hawkes":
            raise UsageError("multitype_hawkes needs a spec file giving the number of marks")
        return MODEL_CLASSES[value](**{n: 1.0 for n in MODEL_CLASSES[value].param_names})
    raise UsageError(f"--model must be a spec file or one of {sorted(MODEL_CLASSES)}")


def _parse_fixed(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        name, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--fixed expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(val)
        except ValueError:
            raise UsageError(f"--fixed {name}: {val!r} is not a number") from None
    return out


def cmd_validate(args) -> int:
    net = io.load_network(args.network)
    tree = net.is_out_tree()
    if net.root is None:
        root = "no root designated"
    else:
        root = "root reachable" if net.root_reaches_all() else "root does not reach every segment"
    print(f"valid, {len(net.segments)} segments, {'out-tree' if tree else 'not an out-tree'}, {root}")
    print(f"total length {net.total_length!r}")
    print("topological order " + " ".join(str(s) for s in net.order))
    print("lengths " + " ".join(f"{s.id}:{s.length!r}" for s in net.segments.values()))
    return 0


def cmd_simulate(args) -> int:
    net = io.load_network(args.network)
    model = _model_arg(args.model)
    cfg = SimulationConfig(args.algorithm, args.seed)
    out = _out_dir(args.out)
    pats = simulate_replicates(model, net, cfg, args.replicates, jobs=args.jobs)
    for r, pat in enumerate(pats):
        seed = args.seed + r
        path = out / f"pattern_seed{seed}.csv"
        io.save_pattern(pat, path)
        io.write_json(out / f"pattern_seed{seed}.json", {
            "model": model.to_spec(), "seed": seed, "algorithm": args.algorithm,
            "tolerance": cfg.tolerance, "network": str(args.network), "points": len(pat),
        })
        print(f"{path} {len(pat)} points")
    return 0


def cmd_fit(args) -> int:
    net = io.load_network(args.network)
    model = _model_arg(args.model)
    fixed = _parse_fixed(args.fixed)
    if fixed:
        unknown = set(fixed) - set(model.param_names)
        if unknown:
            raise UsageError(f"--fixed names unknown parameters {sorted(unknown)}")
        model = model.replace(**fixed)
    pattern = io.load_pattern(args.pattern, net, getattr(model, "n_marks", None))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if args.mode == "marginal":
            free = args.free or []
            if len(free) != 1:
                raise UsageError(f"marginal mode needs exactly one --free parameter, got {len(free)}")
            res = fit_marginal(model, net, pattern, free[0])
        else:
            if args.free:
                raise UsageError("--free only applies to marginal mode")
            res = fit_mle(model, net, pattern, seed=args.seed)
    out = res.as_dict()
    out["n_points"] = len(pattern)
    out["total_length"] = net.total_length
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        io.write_json(Path(_out_dir(args.out)) / "fit.json", out)
    print(text)
    return 0


def _diagnose(res, n_sim, seed, out: Path, suffix: str) -> dict:
    io.save_network(res.network, out / f"residual_network{suffix}.json")
    io.save_pattern(res.pattern, out / f"residual_pattern{suffix}.csv")
    child, parent, dist, cross = res.pattern.interevent_arrays()
    with open(out / f"interevent{suffix}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["child", "parent", "distance", "label"])
        for c, p, d, x in zip(child, parent, dist, cross):
            w.writerow([int(c), int(p), repr(float(d)), "across" if x else "within"])
    with open(out / f"qq{suffix}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["empirical_quantile", "theoretical_quantile", "label"])
        for a, b, label in qq_table(res):
            w.writerow([repr(a), repr(b), label])
    ks_all = ks_exp1(dist, cross, include_crossing=True)
    diag = {
        "n_points": len(res.pattern),
        "residual_total_length": res.total_length,
        "zero_length_segments": list(res.zero_length),
        "ks_including_crossing": {"statistic": ks_all[0], "p_value": ks_all[1]},
    }
    try:
        ks_within = ks_exp1(dist, cross, include_crossing=False)
        diag["ks_within_only"] = {"statistic": ks_within[0], "p_value": ks_within[1]}
    except DalnError as exc:
        diag["ks_within_only"] = {"error": f"{type(exc).__name__}: {exc}"}
    env = mc_envelope(res, n_sim, np.random.Generator(np.random.Philox(seed)))
    diag["envelope"] = env.as_dict()
    return diag


def cmd_residuals(args) -> int:
    net = io.load_network(args.network)
    model = io.load_model(args.model)
    pattern = io.load_pattern(args.pattern, net, getattr(model, "n_marks", None))
    out = _out_dir(args.out)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if model.marked:
            per_mark = residual_transform_marked(model, net, pattern)
            diag = {str(m): _diagnose(res, args.n_sim, args.seed + m - 1, out, f"_mark{m}")
                    for m, res in per_mark.items()}
        else:
            diag = _diagnose(residual_transform(model, net, pattern), args.n_sim, args.seed, out, "")
    io.write_json(out / "diagnostics.json", diag)
    summary = diag if not model.marked else next(iter(diag.values()))
    print(f"KS (all gaps) p = {summary['ks_including_crossing']['p_value']:.4g}; "
          f"envelope p in [{summary['envelope']['p_liberal']:.3g}, "
          f"{summary['envelope']['p_conservative']:.3g}]")
    print(f"wrote {out}")
    return 0


def cmd_study(args) -> int:
    cfg_path = Path(args.config)
    spec = json.loads(cfg_path.read_text(encoding="utf-8"))
    allowed = {"network", "model", "sizes", "replicates", "mode", "marginal_params", "seed",
               "algorithm", "growth", "n_starts"}
    extra = set(spec) - allowed
    if extra:
        raise UsageError(f"unknown study config keys {sorted(extra)}")
    net_ref = spec["network"]
    local = cfg_path.parent / net_ref
    net = io.load_network(local if local.exists() else net_ref)
    sizes = spec.get("sizes", [1])
    if isinstance(sizes, int):
        sizes = list(range(1, sizes + 1))
    cfg = StudyConfig(
        network=net, truth=model_from_spec(spec["model"]), sizes=sizes,
        replicates=int(spec.get("replicates", 1)), mode=spec.get("mode", "joint"),
        marginal_params=spec.get("marginal_params"),
        seed=args.seed if args.seed is not None else int(spec.get("seed", 0)),
        algorithm=spec.get("algorithm", "inverse"), growth=float(spec.get("growth", 1.5)),
        n_starts=int(spec.get("n_starts", 3)), jobs=args.jobs)
    res = run_study(cfg)
    est, summ = res.write(args.out)
    for (size, r, err) in res.failures:
        print(f"size {size} replicate {r} failed: {err}", file=sys.stderr)
    print(f"wrote {est} and {summ}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="daln", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a network file")
    v.add_argument("--network", required=True)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", help="simulate patterns from a model")
    s.add_argument("--network", required=True)
    s.add_argument("--model", required=True, help="model spec JSON")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--algorithm", choices=("inverse", "ogata"), default="inverse")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="maximum likelihood fit")
    f.add_argument("--network", required=True)
    f.add_argument("--pattern", required=True)
    f.add_argument("--model", required=True, help="family name or spec JSON (template and fixed values)")
    f.add_argument("--mode", choices=("joint", "marginal"), default="joint")
    f.add_argument("--free", action="append", help="the free parameter in marginal mode")
    f.add_argument("--fixed", action="append", metavar="NAME=VALUE")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("residuals", help="residual diagnostics for a fitted model")
    r.add_argument("--network", required=True)
    r.add_argument("--pattern", required=True)
    r.add_argument("--model", required=True, help="fitted model JSON (spec or fit output)")
    r.add_argument("--n-sim", type=int, default=99)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default=".")
    r.set_defaults(func=cmd_residuals)

    st = sub.add_parser("study", help="simulation study over growing networks")
    st.add_argument("--config", required=True)
    st.add_argument("--seed", type=int)
    st.add_argument("--jobs", type=int, default=1)
    st.add_argument("--out", default=".")
    st.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"daln: error: {exc}", file=sys.stderr)
        return 2
    except (DalnError, OSError, KeyError, json.JSONDecodeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"{type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
