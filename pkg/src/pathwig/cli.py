"""Command-line front end.

Exit codes: 0 success, 1 usage error (e.g. unknown outcome label), 2 JSON
syntax error, 3 schema violation, 4 protocol validation failure, 5 oracle
mismatch above tolerance.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any

import numpy as np

from . import collapse_oracle, path_engine, scenarios
from .protocol import Protocol, UnknownOutcomeError
from .random_protocols import random_config, random_protocol
from .scenario_file import (
    ScenarioDocument,
    ScenarioProtocolError,
    ScenarioSchemaError,
    ScenarioSyntaxError,
    emit,
    parse_scenario,
)

ENV_TOLERANCE = "PATHWIG_TOLERANCE"
DEFAULT_ORACLE_TOLERANCE = 1e-9
EXIT_USAGE, EXIT_MISMATCH = 1, 5

CASES = {"c": "spin", "d": "probe", "f": "composite"}
PRESETS = {"case-c": "spin", "case-d": "probe", "case-f": "composite"}
PRESET_QUERIES = [
    {"distribution": {}},
    {"paths": {"final": "yes^W"}},
    {"interference": {"final": "yes^W"}},
    {"compare_oracle": {}},
    {"wigner_comparison": {"final": "yes^W"}},
]


def _pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def _fmt(p: float) -> str:
    text = f"{p:.12f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def _fmt_complex(z: complex) -> str:
    return f"{z.real:+.12f}{z.imag:+.12f}j"


def _labels(seq) -> list[str]:
    return [str(o) for o in seq]


def preset_config(name: str, chain: int = 0, erase=(), registered: bool = True,
                  seed: int | None = None) -> scenarios.WignerFriendConfig:
    mode = PRESETS[name]
    overrides = dict(chain_length=chain, erasure=frozenset(erase), f_registered=registered)
    if seed is not None:
        return random_config(np.random.default_rng(seed), mode, **overrides)
    return scenarios.WignerFriendConfig(w_mode=mode, **overrides)


def preset_protocol(name: str, **kw) -> Protocol:
    if name not in PRESETS:
        raise UnknownOutcomeError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return scenarios.build(preset_config(name, **kw))


# --- query runners; each returns a JSON-ready dict -------------------------------------------

def run_distribution(protocol: Protocol) -> dict:
    records = path_engine.full_distribution(protocol)
    return {
        "query": "distribution",
        "slots": [e.observer for e in protocol.registered],
        "outcomes": [{"outcome": _labels(r.outcome), "probability": r.probability} for r in records],
        "total": float(sum(r.probability for r in records)),
    }


def run_paths(protocol: Protocol, final: str) -> dict:
    branch = path_engine._final_branch(protocol, final)
    paths = [p for p in path_engine.enumerate_virtual_paths(protocol) if p.branches[-1] == branch]
    regs = protocol.registered
    rows = []
    for p in paths:
        nodes = [f"{regs[k].observable.branches[b].label}^{regs[k].observer}[{i}]"
                 for k, (b, i) in enumerate(p.node_indices)]
        rows.append({"nodes": [list(n) for n in p.node_indices], "labels": nodes,
                     "amplitude": _pair(p.amplitude)})
    return {"query": "paths", "final": final, "paths": rows}


def run_interference(protocol: Protocol, final: str) -> dict:
    rep = path_engine.interference_report(protocol, final)
    return {
        "query": "interference",
        "final": str(rep.final_outcome),
        "coherent": rep.coherent_sum,
        "incoherent": rep.incoherent_sum,
        "interference_term": rep.interference_term,
        "cross_term": rep.cross_term,
        "real_paths": [{"outcome": _labels(seq), "amplitudes": [_pair(a) for a in amps]}
                       for seq, amps in rep.real_path_amplitudes.items()],
    }


def run_compare_oracle(protocol: Protocol, tolerance: float) -> dict:
    engine = path_engine.as_table(path_engine.full_distribution(protocol))
    oracle = collapse_oracle.evolve_collapse(protocol)
    rows = []
    for seq in protocol.outcome_space():
        a, b = engine.get(seq, 0.0), oracle.get(seq, 0.0)
        rows.append({"outcome": _labels(seq), "path_engine": a, "collapse_oracle": b,
                     "delta": abs(a - b)})
    worst = max(rows, key=lambda r: r["delta"])
    return {"query": "compare_oracle", "tolerance": tolerance, "max_delta": worst["delta"],
            "worst": worst, "rows": rows}


def run_wigner_comparison(protocol: Protocol, final: str) -> dict:
    p_pure, p_mix = collapse_oracle.wigner_comparison(protocol, final)
    return {"query": "wigner_comparison", "final": final, "p_pure": p_pure, "p_mixture": p_mix,
            "difference": p_pure - p_mix}


def run_queries(document: ScenarioDocument, tolerance: float) -> dict:
    results = []
    for q in document.queries or [{"distribution": {}}]:
        (kind, params), = q.items()
        if kind == "distribution":
            results.append(run_distribution(document.protocol))
        elif kind == "paths":
            results.append(run_paths(document.protocol, params["final"]))
        elif kind == "interference":
            results.append(run_interference(document.protocol, params["final"]))
        elif kind == "compare_oracle":
            results.append(run_compare_oracle(document.protocol, params.get("tolerance", tolerance)))
        elif kind == "wigner_comparison":
            results.append(run_wigner_comparison(document.protocol, params["final"]))
    return {"protocol": document.protocol.name, "results": results}


def run_wigner(case: str, registered: bool, chain: int, erase, seed: int | None) -> dict:
    name = f"case-{case}"
    config = preset_config(name, chain, erase, registered, seed)
    report = scenarios.registering_gap(config)
    shown = scenarios.build(config)
    return {
        "query": "wigner",
        "case": case,
        "f_registered": registered,
        "chain": chain,
        "erased": sorted(config.erasure),
        "seed": seed,
        "spin_init": [_pair(z) for z in config.spin_init],
        "amplitudes": [_pair(a) for a in report.amplitudes],
        "table": run_distribution(shown)["outcomes"],
        "p_registered": report.p_yes_registered,
        "p_not_registered": report.p_yes_unregistered,
        "gap": report.gap,
        "interference_term": report.interference_term,
        "record_survival": report.record_survival,
    }


# --- human rendering --------------------------------------------------------------------------

def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()  # noqa: E731
    return "\n".join([line(headers), line(["-" * w for w in widths])] + [line(r) for r in rows])


def render(result: dict) -> str:
    kind = result["query"]
    if kind == "distribution":
        rows = [[*(o["outcome"]), _fmt(o["probability"])] for o in result["outcomes"]]
        rows.append(["total"] + [""] * (len(result["slots"]) - 1) + [_fmt(result["total"])])
        return _table(result["slots"] + ["probability"], rows)
    if kind == "paths":
        rows = [[str(i + 1), " <- ".join(reversed(p["labels"])), _fmt_complex(complex(*p["amplitude"]))]
                for i, p in enumerate(result["paths"])]
        return f"virtual paths ending in {result['final']}: {len(rows)}\n" + \
            _table(["#", "path (latest first)", "amplitude"], rows)
    if kind == "interference":
        return "\n".join([
            f"final outcome      {result['final']}",
            f"coherent           {_fmt(result['coherent'])}",
            f"incoherent         {_fmt(result['incoherent'])}",
            f"interference term  {_fmt(result['interference_term'])}",
        ])
    if kind == "compare_oracle":
        rows = [[", ".join(r["outcome"]), _fmt(r["path_engine"]), _fmt(r["collapse_oracle"]),
                 f"{r['delta']:.3e}"] for r in result["rows"]]
        return _table(["outcome", "path engine", "collapse oracle", "delta"], rows) + \
            f"\nmax delta {result['max_delta']:.3e} (tolerance {result['tolerance']:.1e})"
    if kind == "wigner_comparison":
        return (f"p_pure = {_fmt(result['p_pure'])}\n"
                f"p_mixture = {_fmt(result['p_mixture'])}")
    if kind == "wigner":
        head = (f"case {result['case']}: F registering={'yes' if result['f_registered'] else 'no'}, "
                f"chain K={result['chain']}, erased={result['erased'] or '-'}")
        amps = "\n".join(f"A{i + 1} = {_fmt_complex(complex(*a))}" for i, a in enumerate(result["amplitudes"]))
        slots = len(result["table"][0]["outcome"]) if result["table"] else 1
        headers = (["F", "W"] if slots == 2 else ["W"]) + ["probability"]
        table = _table(headers, [[*o["outcome"], _fmt(o["probability"])] for o in result["table"]])
        return "\n".join([
            head, amps, table,
            f"P(reg) = {_fmt(result['p_registered'])}",
            f"P(notreg) = {_fmt(result['p_not_registered'])}",
            f"gap = {_fmt(result['gap'])}",
            f"interference term = {_fmt(result['interference_term'])}",
            f"record survives = {'yes' if result['record_survival'] else 'no'}",
        ])
    if kind == "sweep":
        return (f"{result['count']} random protocols (seed {result['seed']}): "
                f"max delta {result['max_delta']:.3e} (tolerance {result['tolerance']:.1e})")
    raise ValueError(kind)


# --- argument handling ------------------------------------------------------------------------

def _default_tolerance() -> float:
    raw = os.environ.get(ENV_TOLERANCE)
    return float(raw) if raw else DEFAULT_ORACLE_TOLERANCE


def _indices(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()] if text else []


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they never clobber flags given before the command
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=d(False), help="machine-readable output")
    common.add_argument("--tolerance", type=float, default=d(None),
                        help=f"oracle mismatch threshold (default ${ENV_TOLERANCE} or 1e-9)")
    common.add_argument("--seed", type=int, default=d(None), help="seed for randomized runs")
    common.add_argument("--lenient", action="store_true", default=d(False),
                        help="ignore unknown document fields")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathwig", parents=[_common_flags(False)],
        description="Sum-over-paths probabilities for measurement sequences and Wigner's-friend presets.")
    common = _common_flags(True)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_source(p):
        p.add_argument("scenario", nargs="?", help="scenario file ('-' for stdin)")
        p.add_argument("--preset", choices=sorted(PRESETS))
        return p

    with_source(sub.add_parser("simulate", parents=[common], help="full outcome distribution"))
    with_source(sub.add_parser("run", parents=[common], help="run the document's queries"))
    for name, text in (("paths", "virtual paths ending in a final outcome"),
                       ("interference", "coherent vs incoherent sum for a final outcome")):
        p = with_source(sub.add_parser(name, parents=[common], help=text))
        p.add_argument("--final", required=True, help="final outcome label, e.g. yes^W")
    p = with_source(sub.add_parser("compare-oracle", parents=[common],
                                   help="path engine vs collapse oracle"))
    p.add_argument("--count", type=int, default=100, help="random protocols when sweeping with --seed")
    p = sub.add_parser("wigner", parents=[common], help="Wigner's-friend preset report")
    p.add_argument("--case", choices=sorted(CASES), required=True)
    p.add_argument("--no-register", action="store_true", help="friend does not register")
    p.add_argument("--chain", type=int, default=0, help="number of record qubits")
    p.add_argument("--erase", type=_indices, default=[], help="comma-separated records to erase")
    p = sub.add_parser("emit-preset", parents=[common], help="print a preset scenario document")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--no-register", action="store_true")
    p.add_argument("--chain", type=int, default=0)
    p.add_argument("--erase", type=_indices, default=[])
    return parser


def _load(args) -> ScenarioDocument:
    if args.preset:
        text = emit(preset_protocol(args.preset), PRESET_QUERIES)
    elif args.scenario == "-":
        text = sys.stdin.read()
    elif args.scenario:
        with open(args.scenario, encoding="utf-8") as fh:
            text = fh.read()
    else:
        raise UnknownOutcomeError("give a scenario file or --preset")
    return parse_scenario(text, strict=not args.lenient)


def _dispatch(args, tolerance: float) -> tuple[list[dict], int]:
    if args.command == "emit-preset":
        protocol = preset_protocol(args.name, chain=args.chain, erase=args.erase,
                                   registered=not args.no_register, seed=args.seed)
        sys.stdout.write(emit(protocol, PRESET_QUERIES))
        return [], 0
    if args.command == "wigner":
        return [run_wigner(args.case, not args.no_register, args.chain, args.erase, args.seed)], 0
    if args.command == "compare-oracle" and args.seed is not None and not (args.scenario or args.preset):
        rng = np.random.default_rng(args.seed)
        worst = 0.0
        for _ in range(args.count):
            worst = max(worst, run_compare_oracle(random_protocol(rng), tolerance)["max_delta"])
        result = {"query": "sweep", "seed": args.seed, "count": args.count, "max_delta": worst,
                  "tolerance": tolerance}
        return [result], (EXIT_MISMATCH if worst > tolerance else 0)

    document = _load(args)
    protocol = document.protocol
    if args.command == "simulate":
        return [run_distribution(protocol)], 0
    if args.command == "paths":
        return [run_paths(protocol, args.final)], 0
    if args.command == "interference":
        return [run_interference(protocol, args.final)], 0
    if args.command == "compare-oracle":
        result = run_compare_oracle(protocol, tolerance)
        return [result], (EXIT_MISMATCH if result["max_delta"] > tolerance else 0)
    if args.command == "run":
        report = run_queries(document, tolerance)
        bad = any(r["query"] == "compare_oracle" and r["max_delta"] > r["tolerance"]
                  for r in report["results"])
        return report["results"], (EXIT_MISMATCH if bad else 0)
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    tolerance = args.tolerance if args.tolerance is not None else _default_tolerance()
    try:
        results, code = _dispatch(args, tolerance)
    except (ScenarioSyntaxError, ScenarioSchemaError, ScenarioProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (UnknownOutcomeError, scenarios.ScenarioError, OSError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return EXIT_USAGE
    if not results:
        return code
    if args.json:
        payload: Any = results[0] if len(results) == 1 else {"results": results}
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write("\n\n".join(render(r) for r in results) + "\n")
    if code == EXIT_MISMATCH:
        for r in results:
            if "worst" in r and r["max_delta"] > r["tolerance"]:
                w = r["worst"]
                print(f"oracle mismatch at {', '.join(w['outcome'])}: path engine {w['path_engine']!r}"
                      f" vs collapse oracle {w['collapse_oracle']!r}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
