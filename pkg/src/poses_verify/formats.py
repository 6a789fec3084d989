"""Versioned line-oriented text formats: scenario configs, scenarios, reports.

Every file starts with ``poses-verify/1 <kind>``.  The body is a sequence of
``[section]`` headers followed by ``key = value`` lines; ``#`` starts a
comment.  Sections may repeat (one ``[vehicle]`` per vehicle, and so on) and
their order is preserved.  Floats are written with ``repr`` so that reading a
file back reproduces the exact values.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .verify import Kind, Row, TrackMeasures, Verdict, VerificationProblem, VerificationResult
from .world import (
    ConfigError,
    Detection,
    Scenario,
    ScenarioConfig,
    Vehicle,
    format_payoff_model,
    parse_payoff_model,
)

MAGIC = "poses-verify/1"


class FormatError(ValueError):
    pass


def _parser(fn):
    """Report malformed values from ``fn`` as :class:`FormatError`."""

    @functools.wraps(fn)
    def wrapper(text: str):
        try:
            return fn(text)
        except (FormatError, ConfigError):
            raise
        except (ValueError, KeyError, IndexError) as exc:
            raise FormatError(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


# --- generic sections --------------------------------------------------------


def dump_sections(kind: str, sections: Sequence) -> str:
    lines = [f"{MAGIC} {kind}"]
    for name, entries in sections:
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in entries)
    return "\n".join(lines) + "\n"


def load_sections(text: str, kind: str) -> list:
    lines = text.splitlines()
    if not lines or lines[0].split() != [MAGIC, kind]:
        head = lines[0] if lines else ""
        raise FormatError(f"expected header {MAGIC!r} {kind!r}, got {head!r}")
    sections = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            sections.append((line[1:-1].strip(), []))
            continue
        if "=" not in line or not sections:
            raise FormatError(f"line {lineno}: expected 'key = value' inside a section: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        sections[-1][1].append((key, value))
    return sections


def _floats(value: str, n: Optional[int] = None) -> tuple:
    try:
        out = tuple(float(v) for v in value.split())
    except ValueError as exc:
        raise FormatError(f"expected numbers, got {value!r}") from exc
    if n is not None and len(out) != n:
        raise FormatError(f"expected {n} numbers, got {value!r}")
    return out


def _fmt(*values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _opt_float(value: str) -> Optional[float]:
    return None if value in ("none", "inf") else float(value)


# --- scenario config -----------------------------------------------------------


def config_to_text(cfg: ScenarioConfig) -> str:
    head = [
        ("n_steps", cfg.n_steps),
        ("seed", cfg.seed),
        ("misdetect_prob", repr(float(cfg.misdetect_prob))),
        ("false_alarm_rate", repr(float(cfg.false_alarm_rate))),
        ("detection_noise_sigma", repr(float(cfg.detection_noise_sigma))),
        ("max_detections_per_step", cfg.max_detections_per_step),
        ("payoff", format_payoff_model(cfg.payoff_model)),
        ("scene", _fmt(*cfg.scene)),
        ("init_cov", _fmt(*cfg.init_cov)),
    ]
    if cfg.init_position is not None:
        head.append(("init_position", _fmt(*cfg.init_position)))
    sections = [("config", head)]
    for v in cfg.vehicles:
        entries = [("position", _fmt(*v.position)), ("velocity", _fmt(*v.velocity))]
        if v.visible_until is not None:
            entries.append(("visible_until", v.visible_until))
        entries += [(f"waypoint {k}", _fmt(*p)) for k, p in sorted(v.waypoints.items())]
        sections.append(("vehicle", entries))
    return dump_sections("scenario-config", sections)


@_parser
def config_from_text(text: str) -> ScenarioConfig:
    cfg = ScenarioConfig()
    casts = {
        "n_steps": int,
        "seed": int,
        "misdetect_prob": float,
        "false_alarm_rate": float,
        "detection_noise_sigma": float,
        "max_detections_per_step": int,
        "payoff": parse_payoff_model,
        "scene": lambda v: _floats(v, 4),
        "init_cov": lambda v: _floats(v, 4),
        "init_position": lambda v: _floats(v, 2),
    }
    for name, entries in load_sections(text, "scenario-config"):
        if name == "config":
            for key, value in entries:
                if key not in casts:
                    raise FormatError(f"unknown config key {key!r}")
                try:
                    parsed = casts[key](value)
                except ValueError as exc:
                    raise FormatError(f"bad value for {key}: {value!r}") from exc
                setattr(cfg, "payoff_model" if key == "payoff" else key, parsed)
        elif name == "vehicle":
            fields = {"waypoints": {}}
            for key, value in entries:
                if key in ("position", "velocity"):
                    fields[key] = _floats(value, 2)
                elif key == "visible_until":
                    fields[key] = int(value)
                elif key.startswith("waypoint "):
                    fields["waypoints"][int(key.split()[1])] = _floats(value, 2)
                else:
                    raise FormatError(f"unknown vehicle key {key!r}")
            if "position" not in fields or "velocity" not in fields:
                raise FormatError("vehicle needs position and velocity")
            cfg.vehicles.append(Vehicle(**fields))
        else:
            raise FormatError(f"unknown section [{name}]")
    cfg.validate()
    return cfg


# --- scenarios -------------------------------------------------------------------


def scenario_to_text(sc: Scenario) -> str:
    head = [("n_steps", sc.n_steps), ("vehicles", len(sc.truth)), ("init_cov", _fmt(*sc.init_cov))]
    if sc.init_position is not None:
        head.append(("init_position", _fmt(*sc.init_position)))
    sections = [("scenario", head)]
    for vi, traj in enumerate(sc.truth):
        sections.append((f"truth {vi}", [(str(k), _fmt(*p)) for k, p in enumerate(traj)]))
    for k, Z in enumerate(sc.detections):
        entries = []
        for d in Z:
            value = f"{_fmt(*d.z)} payoff={d.payoff!r}"
            if d.truth_id is not None:
                value += f" truth={d.truth_id}"
            entries.append((str(d.id), value))
        sections.append((f"step {k}", entries))
    return dump_sections("scenario", sections)


@_parser
def scenario_from_text(text: str) -> Scenario:
    n_steps, init_position, init_cov = None, None, None
    truth: dict = {}
    steps: dict = {}
    for name, entries in load_sections(text, "scenario"):
        kind, _, index = name.partition(" ")
        if kind == "scenario":
            for key, value in entries:
                if key == "n_steps":
                    n_steps = int(value)
                elif key == "init_position":
                    init_position = _floats(value, 2)
                elif key == "init_cov":
                    init_cov = _floats(value, 4)
                elif key != "vehicles":
                    raise FormatError(f"unknown scenario key {key!r}")
        elif kind == "truth":
            truth[int(index)] = np.array([_floats(v, 2) for _, v in entries]).reshape(-1, 2)
        elif kind == "step":
            Z = []
            for key, value in entries:
                coords, attrs = [], {}
                for tok in value.split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        attrs[k] = v
                    else:
                        coords.append(float(tok))
                if len(coords) != 2:
                    raise FormatError(f"step {index}: detection {key} needs 2 coordinates")
                truth_id = int(attrs["truth"]) if "truth" in attrs else None
                try:
                    Z.append(Detection(int(key), coords, float(attrs.get("payoff", 1.0)), truth_id))
                except ConfigError as exc:
                    raise FormatError(str(exc)) from exc
            if len({d.id for d in Z}) != len(Z):
                raise FormatError(f"duplicate detection id in step {index}")
            steps[int(index)] = Z
        else:
            raise FormatError(f"unknown section [{name}]")
    if n_steps is None:
        n_steps = len(steps)
    if sorted(steps) != list(range(n_steps)):
        raise FormatError(f"expected detection sections for steps 0..{n_steps - 1}")
    sc = Scenario([truth[i] for i in sorted(truth)], [steps[k] for k in range(n_steps)], init_position)
    if init_cov is not None:
        sc.init_cov = init_cov
    return sc


# --- reports -----------------------------------------------------------------------


@dataclass
class Report:
    rows: list = field(default_factory=list)
    results: list = field(default_factory=list)
    # (label, parent_index) pairs of the unfolding tree
    tree: list = field(default_factory=list)


def report_from(results: Sequence, rows: Sequence, paths: Sequence = ()) -> Report:
    from .polts import tree_nodes

    tree = [(node.label, parent) for node, parent in tree_nodes(paths)] if paths else []
    return Report(list(rows), list(results), tree)


def _row_line(r) -> str:
    m = r.measures
    if any(ch.isspace() for ch in r.label) or not r.label:
        raise FormatError(f"row labels must be non-empty without whitespace: {r.label!r}")
    step = "none" if m.dist_max_step is None else str(m.dist_max_step)
    flags = f"{'ok' if m.gamma_ok else 'alarm'} {'original' if getattr(r, 'is_original', False) else '-'}"
    return f"{r.label} {_fmt(m.phi, m.dist_acc, m.dist_max, m.dist_end)} {step} {flags}"


def report_to_text(report: Report) -> str:
    rows = list(report.rows)
    index = {id(r): i for i, r in enumerate(rows)}
    sections = [("rows", [("count", len(rows))] + [("row", _row_line(r)) for r in rows])]
    for res in report.results:
        prob = res.problem
        l, u, e = prob.window
        lo, hi = prob.max_window
        vacuous = res.sol_opt is None
        entries = [
            ("kind", prob.kind.value),
            ("epsilon", repr(float(prob.epsilon))),
            ("theta", repr(float(prob.theta))),
            ("window", f"{l} {u} {e}"),
            ("dist_max_window", "default" if prob.dist_max_window is None else f"{lo} {hi}"),
            ("status", "vacuous" if vacuous else "solved"),
            ("sol_opt", "inf" if vacuous else repr(float(res.sol_opt))),
            ("theta_star", ("inf" if vacuous else "none") if res.theta_star is None
             else repr(float(res.theta_star))),
            ("rho_star", "none" if res.rho_star is None
             else f"{index[id(res.rho_star)]} {res.rho_star.label}"),
            ("verdict", res.verdict.value),
            ("p_plus", " ".join(str(index[id(r)]) for r in res.p_plus)),
            ("p_minus", " ".join(str(index[id(r)]) for r in res.p_minus)),
        ]
        sections.append(("result", entries))
    if report.tree:
        sections.append(("tree", [("node", f"{i} {parent} {label}")
                                  for i, (label, parent) in enumerate(report.tree)]))
    return dump_sections("report", sections)


def _parse_row(value: str) -> Row:
    parts = value.split()
    if len(parts) not in (5, 8):
        raise FormatError(f"row needs 5 or 8 fields: {value!r}")
    label, nums = parts[0], _floats(" ".join(parts[1:5]), 4)
    step, gamma, original = None, True, False
    if len(parts) == 8:
        step = None if parts[5] == "none" else int(parts[5])
        gamma = parts[6] == "ok"
        original = parts[7] == "original"
    return Row(label, TrackMeasures(*nums, dist_max_step=step, gamma_ok=gamma), original)


@_parser
def report_from_text(text: str) -> Report:
    report = Report()
    for name, entries in load_sections(text, "report"):
        data = entries
        if name == "rows":
            report.rows = [_parse_row(v) for k, v in data if k == "row"]
            count = dict(data).get("count")
            if count is not None and int(count) != len(report.rows):
                raise FormatError(f"row count {count} does not match {len(report.rows)} rows")
        elif name == "result":
            d = dict(data)
            window = tuple(int(x) for x in d["window"].split())
            max_window = d.get("dist_max_window", "default")
            problem = VerificationProblem(
                Kind(d["kind"]), float(d["epsilon"]), float(d["theta"]), window,
                None if max_window == "default" else tuple(int(x) for x in max_window.split()),
            )
            pick = lambda key: [report.rows[int(i)] for i in d.get(key, "").split()]
            report.results.append(VerificationResult(
                problem,
                _opt_float(d["sol_opt"]),
                _opt_float(d["theta_star"]),
                None if d["rho_star"] == "none" else report.rows[int(d["rho_star"].split()[0])],
                pick("p_plus"),
                pick("p_minus"),
                Verdict(d["verdict"]),
            ))
        elif name == "tree":
            for _, value in data:
                i, parent, label = value.split()
                report.tree.append((label, int(parent)))
        else:
            raise FormatError(f"unknown section [{name}]")
    return report


# --- table text ----------------------------------------------------------------------


def _num(x: Optional[float], missing: str = "inf.") -> str:
    if x is None or (isinstance(x, float) and math.isinf(x)):
        return missing
    return f"{x:.2f}"


def _grid(lines: list) -> str:
    widths = [max(len(row[i]) for row in lines) for i in range(len(lines[0]))]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in lines
    )


def report_to_table(report: Report) -> str:
    """Fixed two-decimal rendering with one column per track."""
    blocks = []
    if report.rows:
        rows = report.rows
        lines = [
            ["Track No."] + [r.label for r in rows],
            ["phi"] + [_num(r.measures.phi) for r in rows],
            ["dist^{0,e}"] + [_num(r.measures.dist_acc) for r in rows],
            ["dist^max"] + [_num(r.measures.dist_max) for r in rows],
            ["dist^{e,e}"] + [_num(r.measures.dist_end) for r in rows],
        ]
        blocks.append("Measures of all possible tracks\n" + _grid(lines))
    else:
        blocks.append("Measures of all possible tracks\n(no rows)")
    if report.results:
        res = report.results
        lines = [
            [""] + [r.problem.kind.value.capitalize() for r in res],
            ["sol_opt"] + [_num(r.sol_opt) for r in res],
            ["theta*"] + [_num(r.theta_star, "none" if r.sol_opt is not None else "inf.")
                          for r in res],
            ["rho*"] + ["none" if r.rho_star is None else r.rho_star.label for r in res],
            ["verdict"] + [r.verdict.value for r in res],
        ]
        blocks.append("Verification outcome\n" + _grid(lines))
    return "\n\n".join(blocks) + "\n"
