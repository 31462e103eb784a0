"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 input-file error.  Machine formats
(``csv``, ``json-lines``) carry floats at full precision and no timestamps,
so reruns with the same flags are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import functional as fn
from .discrete import (
    EnsembleFileError,
    SettingEnsemble,
    auto_method,
    discrete_lhv_max,
    discrete_quantum_value,
    discrete_threshold,
    load_ensemble,
)
from .lhv import LhvModel, hemisphere, lhv_bound_analytic, optimize_lhv
from .quantum import TWO_PI_SQ, QuantumPrediction
from .simulate import (
    EventFileError,
    estimate_functional,
    generate_events,
    quantize,
    read_events,
    sidecar_path,
    write_events,
)
from .sphere import Z_AXIS, build_grid

FORMATS = ("human", "csv", "json-lines")
COMMANDS = ("evaluate", "threshold", "optimize-lhv", "discretize", "simulate", "sweep")
EXIT_USAGE = 2
EXIT_INPUT = 3


class UsageError(Exception):
    pass


class InputFileError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated options for one command."""

    command: str
    options: dict = field(default_factory=dict)

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> RunConfig:
        opts = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
        cfg = cls(ns.command, opts)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        o = self.options
        # checked here rather than by argparse so --config can supply it
        if self.command in ("evaluate", "optimize-lhv") and o.get("v") is None:
            raise UsageError("--v is required")
        for key in ("v", "v_assumed", "source_v", "v_min", "v_max"):
            if o.get(key) is not None and not 0.0 <= o[key] <= 1.0:
                raise UsageError(f"--{key.replace('_', '-')} must lie in [0, 1], got {o[key]}")
        if o.get("threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        if self.command == "sweep":
            if not o["v_min"] < o["v_max"]:
                raise UsageError("--v-min must be below --v-max")
            if o["steps"] < 2:
                raise UsageError("--steps must be at least 2")
        if self.command == "simulate" and o.get("from_file") is None and o["n"] < 1:
            raise UsageError("--n must be positive")


def _order(text: str) -> tuple[int, int]:
    try:
        parts = [int(p) for p in text.replace("x", ",").split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid order {text!r}; use N_THETA,N_PHI") from None
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"bad grid order {text!r}; use N_THETA,N_PHI")
    return parts[0], parts[1]


def _order_list(text: str) -> list[tuple[int, int]]:
    """``'4x8,8x16'`` or ``'4,8/8,16'``."""
    if "x" in text:
        return [_order(p) for p in text.split(",") if p]
    return [_order(p) for p in text.split("/") if p]


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    if x is None:
        return ""
    if isinstance(x, (list, tuple)):
        return "x".join(str(i) for i in x)
    return str(x)


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, tuple):
        return list(x)
    return x


class Emitter:
    """Writes rows in the selected format; csv gets one header per run."""

    def __init__(self, fmt: str, out=None):
        self.fmt = fmt
        self.out = out or sys.stdout
        self._header = None

    def row(self, record: dict, human: str | None = None) -> None:
        if self.fmt == "json-lines":
            self.out.write(json.dumps({k: _json_safe(v) for k, v in record.items()}) + "\n")
        elif self.fmt == "csv":
            keys = list(record)
            if self._header is None:
                self._header = keys
                self.out.write(",".join(keys) + "\n")
            self.out.write(",".join(_fmt(record[k]) for k in self._header) + "\n")
        else:
            if human is None:
                human = "  ".join(f"{k}={_human(v)}" for k, v in record.items())
            self.out.write(human + "\n")


def _human(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    if isinstance(x, (list, tuple)):
        return "x".join(str(i) for i in x)
    return str(x)


def _evaluate_order(args):
    if args.geometry == "coplanar":
        return args.n_phi
    return args.order


def cmd_evaluate(args, out: Emitter) -> None:
    report = fn.evaluate_inequality(
        args.geometry, args.v, _evaluate_order(args), optimize=args.optimize, seed=args.seed, budget=args.budget
    )
    d = report.to_dict()
    human = "\n".join([
        f"geometry            {report.geometry}",
        f"visibility          {report.v:.10g}",
        f"quantum value       {report.quantum_value:.10g}   (numeric {report.quantum_numeric:.10g})",
        f"LHV bound           {report.lhv_bound:.10g}   (numeric {report.lhv_numeric:.10g})",
        *([f"LHV best found      {report.lhv_best_found:.10g}"] if report.lhv_best_found is not None else []),
        f"margin              {report.margin:.10g}",
        f"margin / (2 pi)^2   {report.margin_ratio:.10g}",
        f"threshold v         {report.threshold_v:.10g}",
        f"violation           {'yes' if report.violation else 'no'}",
        f"grid order          {_human(report.grid_order)}",
        f"quadrature error    {report.quad_error_estimate:.3g}",
    ])
    out.row(d, human)


def cmd_threshold(args, out: Emitter) -> None:
    rows = []
    geometries = fn.GEOMETRIES if args.geometry == "all" else (args.geometry,)
    for g in geometries:
        rec = {"name": g, "threshold": fn.threshold_visibility(g), "kind": "analytic"}
        if args.numeric:
            order = args.n_phi if g == "coplanar" else args.order
            rec["numeric"] = fn.numeric_threshold(g, order)
        rows.append(rec)
    for name in ("gisin", "chained-limit"):
        rec = {"name": name, "threshold": fn.REFERENCE_THRESHOLDS[name], "kind": "reference"}
        if args.numeric:
            rec["numeric"] = None
        rows.append(rec)
    for rec in rows:
        out.row(rec)


def cmd_optimize_lhv(args, out: Emitter) -> None:
    grid = build_grid(*args.order)
    res = optimize_lhv(args.v, args.family, grid, budget=args.budget, seed=args.seed, degree=args.degree)
    rec = {
        "family": args.family,
        "v": args.v,
        "value": res.value,
        "bound": lhv_bound_analytic(args.v),
        "gap": lhv_bound_analytic(args.v) - res.value,
        "error_estimate": res.error_estimate,
        "evaluations": res.evaluations,
        "final_step": res.final_step,
        "converged": res.converged,
        "model": res.model.describe(),
    }
    out.row(rec)


def _ensemble_pairs(args) -> list[tuple[SettingEnsemble, SettingEnsemble]]:
    pairs = []
    if args.file_a or args.file_b:
        if not (args.file_a and args.file_b):
            raise UsageError("--file-a and --file-b must be given together")
        try:
            pairs.append((load_ensemble(args.file_a), load_ensemble(args.file_b)))
        except OSError as exc:
            raise InputFileError(str(exc)) from None
    for order in args.orders or []:
        e = SettingEnsemble.from_grid(build_grid(*order))
        pairs.append((e, e))
    for n in args.coplanar or []:
        e = SettingEnsemble.coplanar(n)
        pairs.append((e, e))
    if args.random:
        rng = np.random.default_rng(args.seed)
        for _ in range(args.instances):
            pairs.append((SettingEnsemble.random(args.random, rng), SettingEnsemble.random(args.random, rng)))
    if not pairs:
        raise UsageError("no ensembles: give --orders, --coplanar, --random or --file-a/--file-b")
    return pairs


def cmd_discretize(args, out: Emitter) -> None:
    for ens_a, ens_b in _ensemble_pairs(args):
        methods = [args.method] if args.method != "auto" else [auto_method(ens_a, ens_b)]
        if args.method == "both":
            methods = ["brute-force", "alternating"]
        base = {
            "ensemble_a": ens_a.label,
            "ensemble_b": ens_b.label,
            "n_a": len(ens_a),
            "n_b": len(ens_b),
            "weighting_a": ens_a.weighting,
            "weighting_b": ens_b.weighting,
        }
        values = {}
        for method in methods:
            if args.mode == "threshold":
                r = discrete_threshold(ens_a, ens_b, method, args.restarts, args.seed, args.threads)
                values[method] = r.threshold
                rec = dict(base, method=method, exact=r.exact, threshold=r.threshold if r.violated else None,
                           status="violation-possible" if r.violated else "no-violation")
            else:
                r = discrete_lhv_max(ens_a, ens_b, args.v, method, args.restarts, args.seed, args.threads)
                values[method] = r.value
                q = discrete_quantum_value(ens_a, ens_b, args.v)
                rec = dict(base, method=method, exact=r.exact, v=args.v, quantum=q, lhv_max=r.value,
                           margin=q - r.value, status="violation" if q > r.value else "no-violation")
            if len(methods) == 2 and method == "alternating":
                a, b = values["brute-force"], values["alternating"]
                same = a == b or (math.isfinite(a) and abs(a - b) <= 1e-12 * max(1.0, abs(a)))
                rec["status"] = "exact-confirmed" if same else "heuristic-below-exact"
            out.row(rec)


def _source(args):
    if args.source == "quantum":
        return QuantumPrediction(args.source_v)
    if args.lhv_model == "hemisphere-z":
        return LhvModel.pair(hemisphere(Z_AXIS), hemisphere(Z_AXIS))
    return optimize_lhv(args.v_assumed, "hemisphere-pair", budget=args.budget, seed=args.seed).model


def cmd_simulate(args, out: Emitter) -> None:
    if args.from_file:
        if not sidecar_path(args.from_file).exists():
            raise InputFileError(f"{args.from_file}: metadata sidecar {sidecar_path(args.from_file)} not found")
        try:
            events = read_events(args.from_file)
        except OSError as exc:
            raise InputFileError(str(exc)) from None
    else:
        events = generate_events(_source(args), n=args.n, seed=args.seed, threads=args.threads)
        # estimate from the stored precision so a dumped file re-estimates identically
        events = quantize(events)
        if args.events_out:
            write_events(events, args.events_out)
    try:
        report = estimate_functional(events, args.v_assumed, args.k_sigma)
    except ValueError as exc:
        if args.from_file:
            raise InputFileError(str(exc)) from None
        raise UsageError(str(exc)) from None
    d = report.to_dict()
    d["source"] = events.metadata.get("source")
    d["seed"] = events.metadata.get("seed")
    human = "\n".join([
        f"source              {d['source']}",
        f"events              {report.n_events}",
        f"estimate            {report.functional_estimate:.10g} +- {report.std_error:.3g}",
        f"LHV bound           {report.lhv_bound:.10g}",
        f"quantum prediction  {report.quantum_prediction:.10g}",
        f"significance        {report.significance:.3f} sigma",
        f"margin / (2 pi)^2   {(report.functional_estimate - report.lhv_bound) / TWO_PI_SQ:.6g}",
        f"verdict             {report.verdict}",
    ])
    out.row(d, human)


def cmd_sweep(args, out: Emitter) -> None:
    for v in np.linspace(args.v_min, args.v_max, args.steps):
        v = float(v)
        q, b = fn.quantum_value(args.geometry, v), fn.lhv_bound(args.geometry, v)
        out.row({"v": v, "quantum": q, "bound": b, "margin": q - b})


HANDLERS = {
    "evaluate": cmd_evaluate,
    "threshold": cmd_threshold,
    "optimize-lhv": cmd_optimize_lhv,
    "discretize": cmd_discretize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, default="human")
    common.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
    common.add_argument("--config", help="JSON file of option values for this command")

    geom = argparse.ArgumentParser(add_help=False)
    geom.add_argument("--geometry", choices=fn.GEOMETRIES, default="sphere")
    geom.add_argument("--order", type=_order, default=(16, 32), help="sphere grid N_THETA,N_PHI")
    geom.add_argument("--n-phi", type=int, default=64, help="circle nodes for coplanar geometry")

    p = argparse.ArgumentParser(prog="functional-bell", description="Functional Bell inequality toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("evaluate", parents=[common, geom], help="quantum value, LHV bound and margin")
    s.add_argument("--v", type=float, help="visibility (required)")
    s.add_argument("--optimize", action="store_true", help="also run the LHV optimizer")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget", type=int, default=2000)

    s = sub.add_parser("threshold", parents=[common], help="critical visibilities")
    s.add_argument("--geometry", choices=fn.GEOMETRIES + ("all",), default="all")
    s.add_argument("--numeric", action="store_true", help="also locate the zero crossing by quadrature")
    s.add_argument("--order", type=_order, default=(16, 32))
    s.add_argument("--n-phi", type=int, default=64)

    s = sub.add_parser("optimize-lhv", parents=[common], help="search local strategies")
    s.add_argument("--v", type=float, help="visibility (required)")
    s.add_argument("--family", choices=("hemisphere-pair", "harmonic"), default="hemisphere-pair")
    s.add_argument("--degree", type=int, default=1)
    s.add_argument("--order", type=_order, default=(16, 32))
    s.add_argument("--budget", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("discretize", parents=[common], help="finite-settings functional")
    s.add_argument("--orders", type=_order_list, help="quadrature ensembles, e.g. '4,8/8,16/16,32'")
    s.add_argument("--coplanar", type=_int_list, help="equatorial ensembles, e.g. '8,16,32'")
    s.add_argument("--random", type=int, help="random ensembles with this many settings per side")
    s.add_argument("--instances", type=int, default=1)
    s.add_argument("--file-a")
    s.add_argument("--file-b")
    s.add_argument("--mode", choices=("threshold", "value"), default="threshold")
    s.add_argument("--v", type=float, default=1.0)
    s.add_argument("--method", choices=("auto", "brute-force", "alternating", "both"), default="auto")
    s.add_argument("--restarts", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo experiment and estimate")
    s.add_argument("--source", choices=("quantum", "lhv"), default="quantum")
    s.add_argument("--source-v", type=float, default=1.0, help="visibility of the quantum source")
    s.add_argument("--lhv-model", choices=("optimized", "hemisphere-z"), default="optimized")
    s.add_argument("--v-assumed", type=float, default=1.0)
    s.add_argument("--n", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget", type=int, default=2000)
    s.add_argument("--k-sigma", type=float, default=3.0)
    s.add_argument("--events-out", help="write the event CSV (plus .meta.json sidecar)")
    s.add_argument("--from-file", help="estimate from an event CSV instead of simulating")

    s = sub.add_parser("sweep", parents=[common, geom], help="margin over a visibility range")
    s.add_argument("--v-min", type=float, default=0.0)
    s.add_argument("--v-max", type=float, default=1.0)
    s.add_argument("--steps", type=int, default=11)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv, ns) -> argparse.Namespace:
    """Re-parse with defaults from ``--config``; unknown keys are usage errors."""
    try:
        with open(ns.config) as fh:
            values = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFileError(f"{ns.config}: {exc}") from None
    if not isinstance(values, dict):
        raise UsageError(f"{ns.config}: expected a JSON object")
    known = set(vars(ns)) - {"command", "config"}
    values = {k.replace("-", "_"): v for k, v in values.items()}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"{ns.config}: unknown keys for '{ns.command}': {', '.join(unknown)}")
    sub = next(a for a in parser._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
    sub.choices[ns.command].set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    ns = parser.parse_args(argv)
    try:
        if ns.config:
            ns = _apply_config(parser, argv, ns)
        cfg = RunConfig.from_namespace(ns)
        HANDLERS[cfg.command](ns, Emitter(ns.format))
    except UsageError as exc:
        print(f"functional-bell: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputFileError, EnsembleFileError, EventFileError) as exc:
        print(f"functional-bell: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"functional-bell: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
