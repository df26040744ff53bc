"""Command-line interface: ``freshsip verify|bounds|bench|acas-manifest``.

Exit codes of ``verify``: 0 when the property holds (UNSAT), 1 when a
counterexample was found (SAT), 2 when the run was inconclusive. Usage
errors exit with 10, unreadable or malformed inputs with 11.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import FreshSIPError
from .model_io import VerificationProblem, load_nnet, load_property, serialize_result
from .optimizer import SolverConfig, region_bound, solve
from .relaxation import FreshVarConfig, forward_pass

logger = logging.getLogger("freshsip")

EXIT_UNSAT, EXIT_SAT, EXIT_INCONCLUSIVE = 0, 1, 2
EXIT_USAGE, EXIT_INPUT = 10, 11
VERDICT_EXIT = {"UNSAT": EXIT_UNSAT, "SAT": EXIT_SAT, "INCONCLUSIVE": EXIT_INCONCLUSIVE}

SOLVER_DEFAULTS = {
    "timeout": 60.0,
    "max_vars": 20,
    "lam": 0.5,
    "split": "smear",
    "candidate": "argmax",
    "vars": "dpn",
    "priority": "range",
    "monotone": True,
    "max_nodes": None,
    "normalize_input": False,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which collides with INCONCLUSIVE
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_solver_flags(p, with_defaults=True):
    d = SOLVER_DEFAULTS if with_defaults else {k: None for k in SOLVER_DEFAULTS}
    p.add_argument("--timeout", type=float, default=d["timeout"], help="seconds per instance (default 60)")
    p.add_argument("--max-vars", dest="max_vars", type=int, default=d["max_vars"],
                   help="maximum number of fresh variables (default 20)")
    p.add_argument("--lambda", dest="lam", type=float, default=d["lam"],
                   help="maximal fraction of a layer that gets fresh variables (default 0.5)")
    p.add_argument("--split", choices=["smear", "widest"], default=d["split"])
    p.add_argument("--candidate", choices=["argmax", "center"], default=d["candidate"])
    p.add_argument("--vars", choices=["dpn", "neurodiff", "none"], default=d["vars"],
                   help="fresh-variable budget rule")
    p.add_argument("--priority", choices=["range", "earliest"], default=d["priority"],
                   help="which unstable neurons get fresh variables first")
    p.add_argument("--no-monotone", dest="monotone", action="store_const", const=False,
                   default=d["monotone"], help="do not refine child bounds with the parent's")
    p.add_argument("--max-nodes", dest="max_nodes", type=int, default=d["max_nodes"])
    p.add_argument("--normalize-input", dest="normalize_input", action="store_const", const=True,
                   default=d["normalize_input"],
                   help="property input bounds are raw units; normalize them with the NNet header")


def fresh_config(vars_rule: str, max_vars: int, lam: float, priority: str = "range") -> FreshVarConfig:
    if vars_rule == "none":
        return FreshVarConfig.disabled()
    if vars_rule == "neurodiff":
        return FreshVarConfig.neurodiff(max_total=max_vars)
    return FreshVarConfig(max_total=max_vars, lam=lam, priority_rule=priority)


def solver_config(opts: dict) -> SolverConfig:
    try:
        return SolverConfig(
            fresh=fresh_config(opts["vars"], opts["max_vars"], opts["lam"], opts["priority"]),
            split_rule=opts["split"],
            candidate_rule=opts["candidate"],
            monotone_refinement=opts["monotone"],
            timeout=opts["timeout"],
            max_nodes=opts["max_nodes"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def load_problem(network_path, property_path, normalize_input=False, name=None) -> VerificationProblem:
    net = load_nnet(network_path)
    box, objective = load_property(property_path)
    if normalize_input:
        box = net.normalization.normalize_box(box)
    name = name or f"{Path(network_path).stem}:{Path(property_path).stem}"
    return VerificationProblem(net, box, objective, name)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    opts = {k: getattr(args, k) for k in SOLVER_DEFAULTS}
    cfg = solver_config(opts)
    problem = load_problem(args.network, args.property, args.normalize_input)
    report = solve(problem, cfg)
    report.config["normalize_input"] = args.normalize_input
    doc = serialize_result(report)
    if args.out:
        Path(args.out).write_text(doc)
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"{report.verdict} {problem.name} bound={report.bound:.6g} nodes={report.nodes} "
          f"time={report.elapsed:.3f}s")
    if report.counterexample is not None:
        print("counterexample=" + ",".join(repr(float(v)) for v in report.counterexample))
    if not args.quiet:
        sys.stdout.write(doc)
    return VERDICT_EXIT[report.verdict]


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def bounds_table(problem: VerificationProblem, lambdas, max_vars_list, vars_rule="dpn",
                 priority="range", output_index=None) -> list[dict]:
    """Single-pass upper bounds for every ``(lambda, max_vars)`` combination.

    The bound is on ``y[output_index]`` when given, otherwise on the first
    objective row ``c_0^T y + b_0``.
    """
    from .model_io import MaxViolation

    if output_index is None:
        target = MaxViolation(problem.objective.matrix[0], problem.objective.offsets[0])
    else:
        target = MaxViolation(np.eye(problem.network.output_dim)[output_index], 0.0)
    rows = []
    for lam in lambdas:
        for mv in max_vars_list:
            try:
                cfg = fresh_config(vars_rule, mv, lam, priority)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            start = time.perf_counter()
            pass_ = forward_pass(problem.network, problem.input, cfg)
            bound = region_bound(pass_, target)
            rows.append({
                "lambda": lam,
                "max_vars": mv,
                "output_upper_bound": bound,
                "pass_time": time.perf_counter() - start,
            })
    return rows


def cmd_bounds(args) -> int:
    problem = load_problem(args.network, args.property, args.normalize_input)
    rows = bounds_table(problem, args.lambda_list, args.max_vars_list, args.vars, args.priority,
                        args.output_index)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=["lambda", "max_vars", "output_upper_bound", "pass_time"])
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, "output_upper_bound": repr(row["output_upper_bound"]),
                             "pass_time": f"{row['pass_time']:.6f}"})
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


@dataclass
class BenchInstance:
    name: str
    network: Path
    property: Path
    normalize_input: bool | None = None


@dataclass
class BenchManifest:
    """Benchmark definition.

    Text format, one statement per line, ``#`` comments::

        option timeout=60
        option vars=none
        instance <name> <network.nnet> <property.txt> [normalize-input]

    Option keys mirror the ``verify`` flags (``timeout``, ``max-vars``,
    ``lambda``, ``split``, ``candidate``, ``vars``, ``priority``,
    ``monotone``, ``max-nodes``, ``normalize-input``). Relative paths are
    resolved against the manifest's directory.
    """

    instances: list = field(default_factory=list)
    options: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str, base: Path = Path(".")) -> "BenchManifest":
        converters = {
            "timeout": ("timeout", float),
            "max-vars": ("max_vars", int),
            "lambda": ("lam", float),
            "split": ("split", str),
            "candidate": ("candidate", str),
            "vars": ("vars", str),
            "priority": ("priority", str),
            "monotone": ("monotone", _parse_bool),
            "max-nodes": ("max_nodes", int),
            "normalize-input": ("normalize_input", _parse_bool),
        }
        manifest = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "option" and len(parts) == 2 and "=" in parts[1]:
                key, _, value = parts[1].partition("=")
                if key not in converters:
                    raise UsageError(f"manifest line {lineno}: unknown option {key!r}")
                attr, conv = converters[key]
                try:
                    manifest.options[attr] = conv(value)
                except ValueError:
                    raise UsageError(f"manifest line {lineno}: bad value for {key}: {value!r}") from None
            elif parts[0] == "instance" and len(parts) in (4, 5):
                norm = None
                if len(parts) == 5:
                    if parts[4] not in ("normalize-input", "raw"):
                        raise UsageError(f"manifest line {lineno}: unknown instance flag {parts[4]!r}")
                    norm = parts[4] == "normalize-input"
                manifest.instances.append(
                    BenchInstance(parts[1], base / parts[2], base / parts[3], norm)
                )
            else:
                raise UsageError(f"manifest line {lineno}: cannot parse {raw!r}")
        return manifest

    @classmethod
    def load(cls, path) -> "BenchManifest":
        path = Path(path)
        return cls.parse(path.read_text(), path.parent)

    def missing_files(self) -> list[Path]:
        out = []
        for inst in self.instances:
            out += [p for p in (inst.network, inst.property) if not p.is_file()]
        return out


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def run_bench(manifest: BenchManifest, overrides: dict | None = None) -> list[dict]:
    """Run every instance; failures become ``ERROR`` rows."""
    opts = dict(SOLVER_DEFAULTS)
    opts.update(manifest.options)
    opts.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = solver_config(opts)
    rows = []
    for inst in manifest.instances:
        normalize = opts["normalize_input"] if inst.normalize_input is None else inst.normalize_input
        row = {"name": inst.name, "verdict": "ERROR", "time": 0.0, "nodes": 0, "bound": "",
               "parse_time": 0.0, "normalize_input": normalize, "error": ""}
        try:
            start = time.perf_counter()
            problem = load_problem(inst.network, inst.property, normalize, inst.name)
            row["parse_time"] = time.perf_counter() - start
            report = solve(problem, cfg)
            row.update(verdict=report.verdict, time=report.elapsed, nodes=report.nodes,
                       bound=report.bound)
        except (FreshSIPError, OSError, ValueError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            logger.warning("instance %s failed: %s", inst.name, row["error"])
        rows.append(row)
        logger.info("%s %s %.3fs nodes=%d", inst.name, row["verdict"], row["time"], row["nodes"])
    return rows


def summarize(rows: list[dict]) -> dict:
    """Solved counts and cumulative times, in the layout of a results table."""
    def total(verdict):
        return sum(r["time"] for r in rows if r["verdict"] == verdict)

    def count(verdict):
        return sum(1 for r in rows if r["verdict"] == verdict)

    return {
        "sat": count("SAT"),
        "sat_time": total("SAT"),
        "unsat": count("UNSAT"),
        "unsat_time": total("UNSAT"),
        "inconclusive": count("INCONCLUSIVE"),
        "errors": count("ERROR"),
        "solved_parse_time": sum(r["parse_time"] for r in rows if r["verdict"] in ("SAT", "UNSAT")),
    }


def cactus_series(rows: list[dict]) -> list[tuple[int, float, float]]:
    """``(solved count, instance time, cumulative time)`` over solved instances sorted by time."""
    times = sorted(r["time"] for r in rows if r["verdict"] in ("SAT", "UNSAT"))
    return [(i + 1, t, c) for i, (t, c) in enumerate(zip(times, np.cumsum(times)))]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_bench(args) -> int:
    manifest = BenchManifest.load(args.manifest)
    missing = manifest.missing_files()
    if missing:
        raise FileNotFoundError(f"manifest references missing files: {', '.join(map(str, missing[:5]))}")
    overrides = {k: getattr(args, k) for k in SOLVER_DEFAULTS}
    rows = run_bench(manifest, overrides)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    fields = ["name", "verdict", "time", "nodes", "bound", "parse_time", "normalize_input", "error"]
    _write_csv(out_dir / "results.csv", fields, ([r[f] for f in fields] for r in rows))
    summary = summarize(rows)
    _write_csv(out_dir / "summary.csv", ["approach"] + list(summary),
               [[args.label] + list(summary.values())])
    _write_csv(out_dir / "cactus.csv", ["solved", "time", "cumulative_time"], cactus_series(rows))

    print(f"{args.label}: SAT {summary['sat']} ({summary['sat_time']:.2f}s)  "
          f"UNSAT {summary['unsat']} ({summary['unsat_time']:.2f}s)  "
          f"INCONCLUSIVE {summary['inconclusive']}  ERROR {summary['errors']}")
    return 0


# ---------------------------------------------------------------------------
# acas-manifest
# ---------------------------------------------------------------------------

ACAS_PROPERTIES = ("prop_1", "prop_2", "prop_3", "prop_4")


def acas_network_path(acas_dir: Path, i: int, j: int) -> Path:
    return Path(acas_dir) / f"ACASXU_run2a_{i}_{j}_batch_2000.nnet"


def write_acas_manifest(acas_dir, out_dir, timeout=60.0) -> Path:
    """Write the 45-network x 4-property manifest plus the property files."""
    acas_dir, out_dir = Path(acas_dir).resolve(), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = resources.files("freshsip") / "data" / "acas"
    for prop in ACAS_PROPERTIES:
        (out_dir / f"{prop}.txt").write_text((data / f"{prop}.txt").read_text())
    lines = [
        "# ACAS Xu properties 1-4 over all 45 networks",
        "# property files hold normalized input bounds, so no input normalization is applied",
        f"option timeout={timeout:g}",
    ]
    missing = []
    for p, prop in enumerate(ACAS_PROPERTIES, start=1):
        for i in range(1, 6):
            for j in range(1, 10):
                net = acas_network_path(acas_dir, i, j)
                if not net.is_file():
                    missing.append(net)
                lines.append(f"instance acas_{i}_{j}_phi{p} {net} {prop}.txt raw")
    if missing:
        raise FileNotFoundError(f"{len(missing)} ACAS networks missing, e.g. {missing[0]}")
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def cmd_acas_manifest(args) -> int:
    path = write_acas_manifest(args.acas_dir, args.out_dir, args.timeout)
    print(path)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="freshsip", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify", help="verify one network/property pair")
    p.add_argument("--network", required=True)
    p.add_argument("--property", required=True)
    _add_solver_flags(p)
    p.add_argument("--json", help="also write the report as JSON")
    p.add_argument("--out", help="write the result document to a file")
    p.add_argument("-q", "--quiet", action="store_true", help="only print the verdict line")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bounds", help="single-pass bounds for a sweep of fresh-variable settings")
    p.add_argument("--network", required=True)
    p.add_argument("--property", required=True)
    p.add_argument("--lambda-list", dest="lambda_list", type=_float_list, default=[0.0, 0.5])
    p.add_argument("--max-vars-list", dest="max_vars_list", type=_int_list, default=[20])
    p.add_argument("--vars", choices=["dpn", "neurodiff", "none"], default="dpn")
    p.add_argument("--priority", choices=["range", "earliest"], default="range")
    p.add_argument("--output-index", dest="output_index", type=int, default=None,
                   help="bound this network output instead of the first objective row")
    p.add_argument("--normalize-input", dest="normalize_input", action="store_true")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("bench", help="run a benchmark manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", dest="out_dir", default="bench-out")
    p.add_argument("--label", default="freshsip", help="approach name in summary.csv")
    _add_solver_flags(p, with_defaults=False)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("acas-manifest", help="write a manifest for ACAS Xu properties 1-4")
    p.add_argument("--acas-dir", dest="acas_dir", required=True,
                   help="directory containing ACASXU_run2a_<i>_<j>_batch_2000.nnet")
    p.add_argument("--out-dir", dest="out_dir", default="acas-bench")
    p.add_argument("--timeout", type=float, default=60.0)
    p.set_defaults(func=cmd_acas_manifest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits on --help and on usage errors; report the code instead
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"freshsip: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FreshSIPError, OSError, ValueError) as exc:
        print(f"freshsip: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
