"""Command-line entry point.

    poses-verify simulate --config c.cfg [-o s.cfg]
    poses-verify unfold --scenario s.cfg --attack 6:8 [--joint]
    poses-verify verify --scenario s.cfg --attack 6:8 --property robustness [--epsilon 120]
    poses-verify knapsack [--seeds 50 --max-items 12]
    poses-verify reproduce-tables [--format table-text]

Exit codes: 0 property holds (or command succeeded), 1 property fails,
2 usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from . import estimator as est
from . import formats, polts, verify, world
from .formats import Report

log = logging.getLogger("poses_verify")

EXIT_OK, EXIT_FAILS, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
FORMATS = ("structured-text", "table-text")
# attack on steps 6..8 of a 20-step track, as in the bundled table's scene
TABLE_WINDOW = (6, 8, 19)


class UsageError(Exception):
    pass


@dataclass
class RunSpec:
    command: str
    scenario_path: Optional[str] = None
    config_path: Optional[str] = None
    attack: Optional[tuple] = None
    property: verify.Kind = verify.Kind.ROBUSTNESS
    epsilon: Optional[float] = None
    theta: float = 0.0
    dist_max_window: Optional[tuple] = None
    monitor: bool = False
    joint: bool = False
    cap: int = polts.DEFAULT_PATH_CAP
    output_path: str = "-"
    format: str = "structured-text"
    fixture_path: Optional[str] = None
    eps_robustness: float = verify.DEFAULT_EPSILON["robustness"]
    eps_resilience: float = verify.DEFAULT_EPSILON["resilience"]
    seeds: int = 50
    max_items: int = 12


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _window(text: str) -> tuple:
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected L:U, got {text!r}") from None
    return a, b


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poses-verify", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("-o", "--output", default="-", help="report path ('-' for stdout)")
        p.add_argument("--format", choices=FORMATS, default="structured-text")

    p = sub.add_parser("simulate", help="generate a scenario from a scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--output", default="-")

    for name in ("unfold", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True)
        p.add_argument("--attack", required=True, type=_window, metavar="L:U")
        p.add_argument("--joint", action="store_true", help="track with joint Kalman filters")
        p.add_argument("--cap", type=int, default=polts.DEFAULT_PATH_CAP, help="path explosion cap")
        common(p)
        if name == "verify":
            p.add_argument("--property", choices=[k.value for k in verify.Kind], default="robustness")
            p.add_argument("--epsilon", type=float)
            p.add_argument("--theta", type=float, default=0.0)
            p.add_argument("--dist-max-window", type=_window, metavar="A:B")
            p.add_argument("--monitor", action="store_true", help="apply the covariance-trace monitor")

    p = sub.add_parser("knapsack", help="check the knapsack reduction against brute force")
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--max-items", type=int, default=12)
    common(p)

    p = sub.add_parser("reproduce-tables", help="solve both properties over the bundled measure table")
    p.add_argument("--fixture")
    p.add_argument("--epsilon-robustness", type=float, default=verify.DEFAULT_EPSILON["robustness"])
    p.add_argument("--epsilon-resilience", type=float, default=verify.DEFAULT_EPSILON["resilience"])
    common(p)
    return parser


def parse_args(argv: Sequence[str]) -> RunSpec:
    ns = build_parser().parse_args(list(argv))
    spec = RunSpec(command=ns.command, output_path=getattr(ns, "output", "-"),
                   format=getattr(ns, "format", "structured-text"))
    if ns.command == "simulate":
        spec.config_path = ns.config
    elif ns.command in ("unfold", "verify"):
        spec.scenario_path = ns.scenario
        spec.attack = ns.attack
        spec.joint = ns.joint
        spec.cap = ns.cap
        l, u = ns.attack
        if not 0 < l <= u:
            raise UsageError(f"attack window must satisfy 0 < L <= U, got {l}:{u}")
        if ns.cap < 1:
            raise UsageError("--cap must be positive")
        if ns.command == "verify":
            spec.property = verify.Kind(ns.property)
            spec.epsilon = ns.epsilon
            spec.theta = ns.theta
            spec.dist_max_window = ns.dist_max_window
            spec.monitor = ns.monitor
            if spec.epsilon is not None and spec.epsilon < 0:
                raise UsageError("--epsilon must be non-negative")
    elif ns.command == "knapsack":
        if not (ns.seeds >= 1 and 1 <= ns.max_items <= 20):
            raise UsageError("--seeds must be >= 1 and --max-items in [1, 20]")
        spec.seeds, spec.max_items = ns.seeds, ns.max_items
    elif ns.command == "reproduce-tables":
        spec.fixture_path = ns.fixture
        spec.eps_robustness = ns.epsilon_robustness
        spec.eps_resilience = ns.epsilon_resilience
    if not spec.output_path:
        raise UsageError("output path must be non-empty")
    return spec


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(text: str, path: str):
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def render(report: Report, fmt: str) -> str:
    return formats.report_to_table(report) if fmt == "table-text" else formats.report_to_text(report)


def emit_report(results, paths, fmt: str, output_path: str, tree_paths=()):
    """Write ``results`` over the measured ``paths`` (rows) in ``fmt``."""
    _write(render(formats.report_from(results, paths, tree_paths), fmt), output_path)


def read_report(path: str) -> Report:
    return formats.report_from_text(_read(path))


def bundled_fixture() -> str:
    return resources.files("poses_verify").joinpath("data/measure_table.txt").read_text("utf-8")


def _load_scenario(spec: RunSpec) -> world.Scenario:
    sc = formats.scenario_from_text(_read(spec.scenario_path))
    l, u = spec.attack
    if u > sc.end:
        raise UsageError(f"attack window {l}:{u} exceeds the scenario's last step {sc.end}")
    return sc


def _unfold(spec: RunSpec, sc: world.Scenario) -> list:
    params = est.ModelParams()
    init = est.initial_state(sc.start_position(), sc.init_cov)
    l, u = spec.attack
    return polts.unfold(sc, params, init, l, u, joint=spec.joint, cap=spec.cap)


def _run_verify(spec: RunSpec) -> int:
    sc = _load_scenario(spec)
    l, u = spec.attack
    eps = spec.epsilon if spec.epsilon is not None else verify.DEFAULT_EPSILON[spec.property.value]
    problem = verify.VerificationProblem(spec.property, eps, spec.theta, (l, u, sc.end),
                                         spec.dist_max_window)
    paths = _unfold(spec, sc)
    result, kept = verify.verify_paths(paths, problem, monitor=spec.monitor)
    emit_report([result], kept, spec.format, spec.output_path, kept)
    log.info("%s: sol_opt=%s theta*=%s verdict=%s", problem.kind.value, result.sol_opt,
             result.theta_star, result.verdict.value)
    return EXIT_FAILS if result.verdict is verify.Verdict.FAILS else EXIT_OK


def _run_unfold(spec: RunSpec) -> int:
    sc = _load_scenario(spec)
    l, u = spec.attack
    paths = _unfold(spec, sc)
    verify.measure_paths(paths, verify.VerificationProblem("robustness", 0.0, 0.0, (l, u, sc.end)))
    emit_report([], paths, spec.format, spec.output_path, paths)
    return EXIT_OK


def _run_knapsack(spec: RunSpec) -> int:
    failures = 0
    lines = []
    for seed in range(spec.seeds):
        rng = np.random.default_rng(seed)
        inst = polts.random_knapsack(rng, int(rng.integers(1, spec.max_items + 1)))
        model, problem = polts.knapsack_lts(inst)
        got = verify.solve(polts.knapsack_rows(model), problem).sol_opt
        want = polts.knapsack_brute_force(inst)
        ok = got == want
        failures += not ok
        lines.append(f"seed {seed} n={len(inst.items)} W={inst.W:g} lts={got} brute={want} "
                     f"{'ok' if ok else 'MISMATCH'}")
    lines.append(f"{spec.seeds - failures}/{spec.seeds} instances match")
    _write("\n".join(lines) + "\n", spec.output_path)
    return EXIT_OK if failures == 0 else EXIT_FAILS


def reproduce_tables(fixture_text: str, eps_robustness: float, eps_resilience: float) -> Report:
    rows = formats.report_from_text(fixture_text).rows
    results = [
        verify.solve(rows, verify.VerificationProblem(kind, eps, window=TABLE_WINDOW))
        for kind, eps in ((verify.Kind.ROBUSTNESS, eps_robustness),
                          (verify.Kind.RESILIENCE, eps_resilience))
    ]
    return Report(rows, results)


def _run_tables(spec: RunSpec) -> int:
    text = _read(spec.fixture_path) if spec.fixture_path else bundled_fixture()
    report = reproduce_tables(text, spec.eps_robustness, spec.eps_resilience)
    _write(render(report, spec.format), spec.output_path)
    failed = any(r.verdict is verify.Verdict.FAILS for r in report.results)
    return EXIT_FAILS if failed else EXIT_OK


def _run_simulate(spec: RunSpec) -> int:
    cfg = formats.config_from_text(_read(spec.config_path))
    _write(formats.scenario_to_text(world.generate(cfg)), spec.output_path)
    return EXIT_OK


COMMANDS = {
    "simulate": _run_simulate,
    "unfold": _run_unfold,
    "verify": _run_verify,
    "knapsack": _run_knapsack,
    "reproduce-tables": _run_tables,
}


def run(spec: RunSpec) -> int:
    try:
        return COMMANDS[spec.command](spec)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (est.SingularInnovation, polts.Explosion, verify.MissingOriginal,
            formats.FormatError, world.ConfigError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
