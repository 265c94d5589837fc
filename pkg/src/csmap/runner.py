"""Run orchestration shared by the service endpoints.

A run request (scenario text, preset name, or sweep) expands into named
scenario points, executes them, and packages artifacts as named text files:
``summary.csv``, per-point ``points/<name>/trace.jsonl`` (a bare scenario
uses ``trace.jsonl`` at the top level) and preset/sweep plot data under
``plotdata/``.  Artifact content is canonical; identical requests produce
byte-identical artifacts.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .engine import run_scenario
from .presets import PRESETS
from .scenario import Scenario, ScenarioError, dump_scenario, load_scenario
from .trace import SimTrace, csv_text

SUMMARY_COLUMNS = [
    "point",
    "name",
    "packets",
    "packets_truncated",
    "collisions",
    "mean_ber",
    "max_ber",
    "post_warmup_max_ber",
    "max_delay_rounds",
    "regimes_seen",
    "max_abs_distance_error_m",
    "tracking_lost_at_s",
]


@dataclass
class RunResult:
    name: str
    points: list[str]
    summary_rows: list[dict]
    artifacts: dict[str, str] = field(default_factory=dict)


def _summary_row(point: str, trace: SimTrace) -> dict:
    row = {"point": point, **trace.summary()}
    row["regimes_seen"] = ";".join(row.get("regimes_seen") or [])
    return row


def _summary_csv(rows: list[dict]) -> str:
    return csv_text(SUMMARY_COLUMNS, [[r.get(c) for c in SUMMARY_COLUMNS] for r in rows])


def execute_scenario_text(
    text: str,
    seed: int | None = None,
    duration: float | None = None,
    include_trace: bool = True,
) -> RunResult:
    scenario = load_scenario(text)
    if seed is not None:
        scenario = scenario.with_overrides(seed=seed)
    if duration is not None:
        scenario = scenario.with_overrides(run_duration=duration)
    trace = run_scenario(scenario)
    rows = [_summary_row("run", trace)]
    artifacts = {"summary.csv": _summary_csv(rows), "scenario.ini": dump_scenario(scenario)}
    if include_trace:
        artifacts["trace.jsonl"] = trace.to_jsonl()
    return RunResult(name=scenario.name, points=["run"], summary_rows=rows, artifacts=artifacts)


def execute_preset(
    preset_name: str,
    seed: int | None = None,
    duration: float | None = None,
    include_trace: bool = True,
) -> RunResult:
    try:
        preset = PRESETS[preset_name]
    except KeyError:
        raise ScenarioError(
            f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}"
        ) from None
    points = preset.build(seed if seed is not None else 1, duration)
    results: list[tuple[str, SimTrace]] = []
    rows = []
    artifacts: dict[str, str] = {}
    for point_name, scenario in points:
        trace = run_scenario(scenario)
        results.append((point_name, trace))
        rows.append(_summary_row(point_name, trace))
        if include_trace:
            artifacts[f"points/{point_name}/trace.jsonl"] = trace.to_jsonl()
        artifacts[f"points/{point_name}/scenario.ini"] = dump_scenario(scenario)
    artifacts["summary.csv"] = _summary_csv(rows)
    for fname, content in preset.plotdata(results).items():
        artifacts[f"plotdata/{fname}"] = content
    return RunResult(
        name=preset_name,
        points=[p for p, _ in points],
        summary_rows=rows,
        artifacts=artifacts,
    )


def override_scenario_text(text: str, param: str, value: float) -> str:
    """Set ``section.key`` in scenario text and return the new text."""
    if "." not in param:
        raise ScenarioError(f"sweep parameter {param!r} must look like section.key")
    section, key = param.split(".", 1)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"unparseable scenario file: {exc}") from None
    if not parser.has_section(section):
        parser.add_section(section)
    parser.set(section, key, repr(value))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def execute_sweep(
    text: str,
    param: str,
    values: list[float],
    seed: int | None = None,
    include_trace: bool = False,
) -> RunResult:
    if not values:
        raise ScenarioError("sweep needs at least one value")
    rows = []
    artifacts: dict[str, str] = {}
    points = []
    for value in values:
        point_text = override_scenario_text(text, param, value)
        scenario = load_scenario(point_text)
        if seed is not None:
            scenario = scenario.with_overrides(seed=seed)
        trace = run_scenario(scenario)
        point_name = f"{param.replace('.', '_')}_{value:g}"
        points.append(point_name)
        row = _summary_row(point_name, trace)
        row["value"] = value
        rows.append(row)
        artifacts[f"points/{point_name}/scenario.ini"] = dump_scenario(scenario)
        if include_trace:
            artifacts[f"points/{point_name}/trace.jsonl"] = trace.to_jsonl()
    artifacts["summary.csv"] = _summary_csv(rows)
    artifacts[f"plotdata/sweep_{param.replace('.', '_')}.csv"] = csv_text(
        ["value", "mean_ber", "max_ber", "packets", "collisions"],
        [[r["value"], r["mean_ber"], r["max_ber"], r["packets"], r["collisions"]] for r in rows],
    )
    return RunResult(name=f"sweep:{param}", points=points, summary_rows=rows, artifacts=artifacts)
