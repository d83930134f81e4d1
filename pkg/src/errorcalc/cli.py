"""Command-line front end.

Every command resolves its arguments into a JSON-serializable configuration,
runs from that configuration alone, and prints a ``report-v1`` document::

    {"schema": "report-v1", "version": ..., "command": [argv...],
     "config": {...}, "results": {...}, "warnings": [...]}

``errorcalc rerun REPORT`` re-executes a report's ``config`` and must
reproduce its results exactly.  Exit codes: 0 success, 2 usage or
configuration error, 3 runtime domain error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, rng
from .errors import DomainError, ErrorCalcError
from .expression import Const, Var, eval2, parse, print_canonical, substitute, total
from .oracle import (
    AGREEMENT_C,
    EPSILON_BIAS,
    EPSILON_GAMMA,
    extend_by_limit,
    gamma_remainder_scale,
    mc_bias,
    mc_gamma,
)
from .propagation import gamma, propagate, propagate_naive, pushforward
from .sequences import (
    BettingStrategy,
    SelectionRule,
    SequenceFormatError,
    champernowne_bits,
    ensemble_capital,
    lil_statistic,
    load_json,
    martingale_capital,
    normality_report,
    prng_bits,
    read_sequence,
    select_subsequence,
    selection_mask,
    write_sequence,
)
from .structure import (
    Frame,
    base_frame,
    diag_structure,
    structure_from_config,
    structure_to_config,
)

SCHEMA = "report-v1"
EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 2, 3


class ConfigError(ErrorCalcError, ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of numbers, got {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{what} must be a non-empty list of finite numbers")
    return vals


def _read_json(path: str, what: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def _structure_doc(args) -> dict:
    if args.structure:
        doc = _read_json(args.structure, "structure config")
        structure_from_config(doc)  # validate early
        return doc
    if args.sigma:
        kind, _, values = args.sigma.partition(":")
        if kind != "diag":
            raise ConfigError("--sigma only supports the 'diag:a,b,...' shorthand")
        if not args.vars:
            raise ConfigError("--sigma needs --vars")
        names = [v.strip() for v in args.vars.split(",")]
        variances = _floats(values, "--sigma")
        return structure_to_config(diag_structure(names, variances))
    raise ConfigError("a structure is required: --structure PATH or --sigma diag:a,b,...")


def _sha256(path: str) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise SequenceFormatError(f"cannot read {path}: {exc.strerror}") from None


def _frame_dict(f: Frame) -> dict:
    return {"point": f.point.tolist(), "gamma": f.gamma.tolist(), "bias": f.bias.tolist(), "clip": f.clip}


# ---------------------------------------------------------------------------
# commands: each takes a resolved config and returns (results, warnings)


def run_propagate(cfg: dict) -> tuple[dict, list[str]]:
    s = structure_from_config(cfg["structure"])
    e = parse(cfg["expr"], s.names)
    f = base_frame(s, cfg["point"])
    q = propagate(e, f)
    g = gamma(q, q, f)
    warnings = []
    if q.nondifferentiable:
        warnings.append("non-differentiable point (abs at 0): derivative taken as 0")
    return {
        "canonical": print_canonical(e),
        "value": q.value,
        "gradient": q.gradient.tolist(),
        "gamma": g,
        "sqrt_gamma": math.sqrt(max(g, 0.0)),
        "bias": q.bias,
        "nondifferentiable": q.nondifferentiable,
    }, warnings


def run_oracle(cfg: dict) -> tuple[dict, list[str]]:
    s = structure_from_config(cfg["structure"])
    e = parse(cfg["expr"], s.names)
    f = base_frame(s, cfg["point"])
    q = propagate(e, f)
    g = gamma(q, q, f)
    common = dict(samples=cfg["samples"], seed=cfg["seed"], workers=cfg.get("workers", 1))
    mg = mc_gamma(e, s, cfg["point"], cfg["epsilon_gamma"], **common)
    mb = mc_bias(e, s, cfg["point"], cfg["epsilon_bias"], **common)
    c = cfg["agreement_c"]
    remainder = gamma_remainder_scale(eval2(e, f.point).hessian, f.gamma, cfg["epsilon_gamma"])
    results = {
        "engine": {"value": q.value, "gamma": g, "bias": q.bias},
        "mc_gamma": {**mg.to_dict(), "agrees": mg.agrees_with(g, c)},
        "mc_bias": {**mb.to_dict(), "agrees": mb.agrees_with(q.bias, c)},
        "agreement_rule": f"|estimate - engine| <= 3*std_error + {c}*epsilon*|engine|",
        "gamma_remainder_scale": remainder,
    }
    warnings = []
    if remainder > 0.1 * cfg["epsilon_gamma"] * g:
        warnings.append(
            "curvature dominates the error variance here; the finite-epsilon gamma estimate "
            "carries an offset of about gamma_remainder_scale"
        )
    if q.nondifferentiable:
        warnings.append("non-differentiable point (abs at 0): derivative taken as 0")
    return results, warnings


def coherence_demo() -> dict:
    """Identity written as a shear followed by its inverse, through both engines."""
    names = ("x", "y")
    s = diag_structure(names, [1.0, 1.0])
    shear = [parse("x + y", names), parse("y", names)]
    inverse = [parse("x - y", names), parse("y", names)]
    f0 = base_frame(s, [0.0, 0.0])
    f1 = pushforward(shear, f0)
    f2 = pushforward(inverse, f1)
    err = float(np.max(np.abs(f2.gamma - f0.gamma)))
    naive_mid = propagate_naive([shear], s, [0.0, 0.0])
    naive = propagate_naive([shear, inverse], s, [0.0, 0.0])
    return {
        "mapping": {"forward": ["x + y", "y"], "inverse": ["x - y", "y"], "point": [0.0, 0.0], "sigma": "diag(1,1)"},
        "coherent": {
            "after_forward": _frame_dict(f1),
            "after_round_trip": _frame_dict(f2),
            "max_abs_gamma_error": err,
            "first_coordinate_error": math.sqrt(f2.gamma[0, 0]),
        },
        "naive": {
            "after_forward": naive_mid.tolist(),
            "after_round_trip": naive.tolist(),
            "first_coordinate_error": float(naive[0]),
        },
    }


def run_coherence(cfg: dict) -> tuple[dict, list[str]]:
    return coherence_demo(), []


def limit_sequence(spec: dict, names) -> list:
    """Expressions F_1..F_K from a sequence spec document."""
    if "sequence" in spec:
        items = spec["sequence"]
        if not isinstance(items, list):
            raise ConfigError("'sequence' must be a list of expressions")
        return [parse(str(t), names) for t in items]
    fam = spec.get("family")
    if not isinstance(fam, dict):
        raise ConfigError("sequence spec needs 'sequence' or 'family'")
    try:
        term_text, index, K = str(fam["term"]), str(fam.get("index", "k")), int(fam["K"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"family spec is invalid: {exc}") from None
    term = parse(term_text, tuple(names) + (index,))
    base: list = [Var(v, i) for i, v in enumerate(names)]
    terms = [substitute(term, base + [Const(float(k))]) for k in range(1, K + 1)]
    if not fam.get("partial_sums", True):
        return terms
    out, acc = [], None
    for t in terms:
        acc = t if acc is None else total([acc, t])
        out.append(acc)
    return out


def run_limit(cfg: dict) -> tuple[dict, list[str]]:
    s = structure_from_config(cfg["structure"])
    seq = limit_sequence(cfg["spec"], s.names)
    report = extend_by_limit(seq, s, cfg["points"], cfg["seed"], cfg.get("workers", 1))
    return {"K": len(seq), **report.to_dict()}, []


def _sequence_source(cfg: dict):
    if cfg.get("sha256") is not None and _sha256(cfg["file"]) != cfg["sha256"]:
        raise SequenceFormatError(f"{cfg['file']} changed since the report was made (sha256 mismatch)")
    return read_sequence(cfg["file"], packed=cfg.get("packed", False), count=cfg.get("count"))


def run_generate(cfg: dict) -> tuple[dict, list[str]]:
    if cfg["generator"] == "champernowne":
        seq = champernowne_bits(cfg["count"])
    else:
        seq = prng_bits(cfg["count"], cfg["seed"], cfg.get("workers", 1))
    write_sequence(cfg["out"], seq, packed=cfg["packed"])
    return {
        "out": cfg["out"],
        "count": len(seq),
        "ones": int(seq.bits.sum()),
        "mean": seq.mean(),
        "head": str(seq)[:64],
        "sha256": _sha256(cfg["out"]),
        "provenance": seq.provenance,
    }, []


def run_analyze(cfg: dict) -> tuple[dict, list[str]]:
    seq = _sequence_source(cfg)
    rep = normality_report(seq, cfg["kmax"])
    results = {"length": len(seq), "mean": seq.mean(), "table": rep.rows}
    if len(seq) >= cfg["n0"] >= 10:
        results["lil_statistic"] = lil_statistic(seq, cfg["n0"])
    return results, rep.warnings


def run_select(cfg: dict) -> tuple[dict, list[str]]:
    seq = _sequence_source(cfg)
    rule = SelectionRule.from_json(cfg["rule"])
    sub = select_subsequence(seq, rule)
    m = len(sub)
    results = {"input_length": len(seq), "selected": m, "selected_positions_head": np.flatnonzero(selection_mask(seq, rule))[:32].tolist()}
    if m:
        bound = 4.0 / (2.0 * math.sqrt(m))
        results.update({"mean": sub.mean(), "clt_bound": bound, "within_bound": abs(sub.mean() - 0.5) <= bound})
    if cfg.get("out"):
        write_sequence(cfg["out"], sub, packed=cfg.get("packed", False))
        results["out"] = cfg["out"]
    return results, [] if m else ["rule selected no positions"]


def run_bet(cfg: dict) -> tuple[dict, list[str]]:
    strategy = BettingStrategy.from_json(cfg["strategy"])
    if cfg.get("ensemble"):
        r = ensemble_capital(strategy, cfg["ensemble"], cfg["length"], cfg["seed"], cfg["initial"])
        return {
            "mode": "ensemble",
            "sequences": r.sequences,
            "length": r.length,
            "mean_final_capital": r.mean,
            "std_error": r.std_error,
            "within_3_std_errors": r.within(3.0),
        }, []
    seq = _sequence_source(cfg)
    traj = martingale_capital(seq, strategy, cfg["initial"])
    return {
        "mode": "single",
        "length": len(seq),
        "final_capital": float(traj[-1]),
        "max_capital": float(traj.max()),
        "trajectory": traj.tolist(),
    }, []


RUNNERS: dict[str, Callable[[dict], tuple[dict, list[str]]]] = {
    "propagate": run_propagate,
    "oracle": run_oracle,
    "coherence-demo": run_coherence,
    "limit": run_limit,
    "sequence generate": run_generate,
    "sequence analyze": run_analyze,
    "sequence select": run_select,
    "sequence bet": run_bet,
}


def load_schema() -> dict:
    """The shipped JSON schema for reports."""
    return json.loads(resources.files("errorcalc").joinpath(f"schemas/{SCHEMA}.json").read_text())


def execute(cfg: dict, argv: list[str]) -> dict:
    name = cfg.get("command")
    if name not in RUNNERS:
        raise ConfigError(f"unknown command in config: {name!r}")
    results, warnings = RUNNERS[name](cfg)
    return {
        "schema": SCHEMA,
        "version": __version__,
        "command": list(argv),
        "config": cfg,
        "results": results,
        "warnings": warnings,
    }


# ---------------------------------------------------------------------------
# argument resolution


def _resolve(args) -> dict:
    cmd = args.cmd
    if cmd in ("propagate", "oracle"):
        cfg = {"command": cmd, "expr": args.expr, "structure": _structure_doc(args)}
        cfg["point"] = _floats(args.point, "--point")
        if cmd == "oracle":
            cfg.update(
                epsilon_gamma=args.epsilon_gamma,
                epsilon_bias=args.epsilon_bias,
                samples=args.samples,
                seed=args.seed,
                workers=args.workers,
                chunk=rng.CHUNK,
                prng=rng.GENERATOR_NAME,
                agreement_c=AGREEMENT_C,
            )
        return cfg
    if cmd == "coherence-demo":
        return {"command": cmd}
    if cmd == "limit":
        return {
            "command": cmd,
            "spec": _read_json(args.spec, "sequence spec"),
            "structure": _structure_doc(args),
            "points": args.points,
            "seed": args.seed,
            "workers": args.workers,
            "chunk": rng.CHUNK,
            "prng": rng.GENERATOR_NAME,
        }
    sub = args.seq_cmd
    cfg: dict[str, Any] = {"command": f"sequence {sub}"}
    if sub == "generate":
        cfg.update(
            generator=args.generator,
            count=args.count,
            seed=args.seed,
            out=args.out,
            packed=args.packed,
            workers=args.workers,
            prng=rng.GENERATOR_NAME,
        )
        return cfg
    if sub == "bet" and args.ensemble:
        cfg.update(ensemble=args.ensemble, length=args.length, seed=args.seed, prng=rng.GENERATOR_NAME)
    else:
        if not args.file:
            raise ConfigError(f"sequence {sub} needs a sequence FILE")
        cfg.update(file=args.file, packed=args.packed, count=args.count, sha256=_sha256(args.file))
    if sub == "analyze":
        cfg.update(kmax=args.kmax, n0=args.n0)
    elif sub == "select":
        cfg.update(rule=load_json(args.rule, "selection rule"), out=args.out)
        SelectionRule.from_json(cfg["rule"])
    elif sub == "bet":
        cfg.update(strategy=load_json(args.strategy, "betting strategy"), initial=args.initial)
        BettingStrategy.from_json(cfg["strategy"])
        if not args.initial > 0:
            raise ConfigError("--initial must be positive")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="errorcalc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"errorcalc {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    def output_flags(sp, csv_ok=False):
        sp.add_argument("--output", "-o", help="write the report here instead of stdout")
        if csv_ok:
            sp.add_argument("--csv", action="store_true", help="emit the tabular section as CSV")

    def structure_flags(sp):
        sp.add_argument("--structure", help="structure config JSON file")
        sp.add_argument("--sigma", help="constant diagonal shorthand, e.g. diag:0.01,0.04")
        sp.add_argument("--vars", help="variable names for --sigma, e.g. x,y")

    for name in ("propagate", "oracle"):
        sp = sub.add_parser(name, help="propagate errors through EXPR" if name == "propagate" else "engine vs Monte Carlo oracle")
        sp.add_argument("expr")
        structure_flags(sp)
        sp.add_argument("--point", required=True, help="comma-separated base point")
        if name == "oracle":
            sp.add_argument("--epsilon-gamma", type=float, default=EPSILON_GAMMA)
            sp.add_argument("--epsilon-bias", type=float, default=EPSILON_BIAS)
            sp.add_argument("--samples", type=int, default=10**6)
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--workers", type=int, default=1)
        output_flags(sp)

    sp = sub.add_parser("coherence-demo", help="Gauss engine vs naive formula on a shear round trip")
    output_flags(sp)

    sp = sub.add_parser("limit", help="Cauchy test of a sequence in the Dirichlet norm")
    sp.add_argument("spec", help="sequence spec JSON")
    structure_flags(sp)
    sp.add_argument("--points", type=int, default=10**4, help="grid cells or Monte Carlo samples")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    output_flags(sp, csv_ok=True)

    sp = sub.add_parser("sequence", help="binary sequence lab")
    ssub = sp.add_subparsers(dest="seq_cmd", required=True)

    g = ssub.add_parser("generate")
    g.add_argument("generator", choices=["champernowne", "prng"])
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--packed", action="store_true")
    g.add_argument("--workers", type=int, default=1)
    output_flags(g)

    for name in ("analyze", "select", "bet"):
        a = ssub.add_parser(name)
        a.add_argument("file", nargs="?" if name == "bet" else None)
        a.add_argument("--packed", action="store_true", help="file holds packed MSB-first bits")
        a.add_argument("--count", type=int, help="use only the first COUNT bits")
        if name == "analyze":
            a.add_argument("--kmax", type=int, default=4)
            a.add_argument("--n0", type=int, default=10)
        elif name == "select":
            a.add_argument("--rule", required=True, help="selection rule JSON")
            a.add_argument("--out")
        else:
            a.add_argument("--strategy", required=True, help="betting strategy JSON")
            a.add_argument("--initial", type=float, default=1.0)
            a.add_argument("--ensemble", type=int, help="run over this many PRNG sequences instead of FILE")
            a.add_argument("--length", type=int, default=1000)
            a.add_argument("--seed", type=int, default=0)
        output_flags(a, csv_ok=name in ("analyze", "bet"))

    r = sub.add_parser("rerun", help="re-execute a report from its echoed config")
    r.add_argument("report")
    r.add_argument("--workers", type=int, help="override the worker count")
    output_flags(r)
    return p


# ---------------------------------------------------------------------------
# output


def to_csv(report: dict) -> str:
    results = report["results"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cmd = report["config"]["command"]
    if cmd == "sequence analyze":
        cols = ["k", "windows", "max_deviation", "worst_block", "chi_square", "dof"]
        w.writerow(cols)
        for row in results["table"]:
            w.writerow([row[c] for c in cols])
    elif cmd == "limit":
        w.writerow(["N", "l2_increment", "energy_increment"])
        for i, (a, b) in enumerate(zip(results["l2_increments"], results["energy_increments"]), start=1):
            w.writerow([i, repr(a), repr(b)])
    elif cmd == "sequence bet" and "trajectory" in results:
        w.writerow(["n", "capital"])
        for i, c in enumerate(results["trajectory"], start=1):
            w.writerow([i, repr(c)])
    else:
        raise ConfigError(f"--csv has no tabular section for {cmd!r}")
    return buf.getvalue()


def _emit(report: dict, args) -> None:
    text = to_csv(report) if getattr(args, "csv", False) else json.dumps(report, indent=2) + "\n"
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.cmd == "rerun":
            old = _read_json(args.report, "report")
            if not isinstance(old, dict) or old.get("schema") != SCHEMA:
                raise ConfigError(f"{args.report} is not a {SCHEMA} report")
            cfg = dict(old["config"])
            if args.workers is not None and "workers" in cfg:
                cfg["workers"] = args.workers
            report = execute(cfg, argv)
        else:
            report = execute(_resolve(args), argv)
        _emit(report, args)
    except (DomainError, SequenceFormatError) as exc:
        print(f"errorcalc: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ErrorCalcError, KeyError, TypeError) as exc:
        print(f"errorcalc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
