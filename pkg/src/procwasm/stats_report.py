"""Statistics and report generation.

Takes per-benchmark timing samples for one baseline system and any
number of candidate systems, and produces mean plus standard error per
cell, candidate/baseline slowdown ratios, and geomean/median aggregates;
counter sets reduce to per-event ratio geomeans. Reports emit as
Markdown or CSV, with every number at 6 significant digits so the two
formats parse back identically.
"""

from __future__ import annotations

import math
import statistics
from collections.abc import Mapping
from dataclasses import dataclass, field

from .errors import EmptyInput, NonPositive, NoOverlap

GEOMEAN_ROW = "geomean"
MEDIAN_ROW = "median"


# -- core statistics ---------------------------------------------------------

def mean_stderr(xs) -> tuple[float, float]:
    """Sample mean and standard error (n-1 denominator; 0 when n=1)."""
    xs = list(xs)
    if not xs:
        raise EmptyInput("mean_stderr over an empty sample")
    mean = statistics.fmean(xs)
    if len(xs) == 1:
        return mean, 0.0
    return mean, statistics.stdev(xs) / math.sqrt(len(xs))


def geomean(xs) -> float:
    """exp of the mean log; defined only for positive values."""
    xs = list(xs)
    if not xs:
        raise EmptyInput("geomean over an empty sample")
    if any(x <= 0 for x in xs):
        raise NonPositive("geomean requires every value > 0")
    return math.exp(statistics.fmean(math.log(x) for x in xs))


def median(xs) -> float:
    xs = list(xs)
    if not xs:
        raise EmptyInput("median over an empty sample")
    return statistics.median(xs)


# -- slowdown report ---------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkTimes:
    """Timing samples for one benchmark across systems (positive ms)."""

    name: str
    baseline: tuple[float, ...]
    candidates: dict[str, tuple[float, ...]]


@dataclass
class SlowdownRow:
    benchmark: str
    stats: dict[str, tuple[float, float]]  # system -> (mean, stderr)
    ratios: dict[str, float]  # candidate -> candidate mean / baseline mean


@dataclass
class SlowdownReport:
    baseline_name: str
    candidate_names: list[str]
    rows: list[SlowdownRow] = field(default_factory=list)
    geomeans: dict[str, float] = field(default_factory=dict)
    medians: dict[str, float] = field(default_factory=dict)

    @property
    def systems(self) -> list[str]:
        return [self.baseline_name, *self.candidate_names]


def build_slowdown_report(times, baseline_name: str = "baseline"
                          ) -> SlowdownReport:
    """Reduce timing samples to the slowdown table.

    Ratios divide candidate means by baseline means; the geomean and
    median aggregate the per-benchmark ratios of each candidate. Rows
    come out ordered by benchmark name.
    """
    times = list(times)
    if not times:
        raise EmptyInput("no benchmarks")
    candidate_names = list(times[0].candidates)
    report = SlowdownReport(baseline_name, candidate_names)
    for bt in sorted(times, key=lambda t: t.name):
        if list(bt.candidates) != candidate_names:
            raise ValueError(
                f"benchmark {bt.name!r} has a different candidate set")
        samples = {baseline_name: bt.baseline, **bt.candidates}
        for name, values in samples.items():
            if any(v <= 0 for v in values):
                raise NonPositive(
                    f"benchmark {bt.name!r}, system {name!r}: "
                    "times must be positive")
        stats = {name: mean_stderr(values)
                 for name, values in samples.items()}
        base_mean = stats[baseline_name][0]
        ratios = {name: stats[name][0] / base_mean
                  for name in candidate_names}
        report.rows.append(SlowdownRow(bt.name, stats, ratios))
    for name in candidate_names:
        per_bench = [row.ratios[name] for row in report.rows]
        report.geomeans[name] = geomean(per_bench)
        report.medians[name] = median(per_bench)
    return report


# -- counter report ----------------------------------------------------------

@dataclass
class CounterReport:
    candidate_names: list[str]
    events: list[str] = field(default_factory=list)
    # event -> candidate -> geomean of per-benchmark ratios
    geomeans: dict[str, dict[str, float]] = field(default_factory=dict)
    footnotes: list[str] = field(default_factory=list)


def _counts(obj) -> Mapping:
    """Accept plain mappings or objects carrying a `.values` mapping."""
    if isinstance(obj, Mapping):
        return obj
    values = getattr(obj, "values", None)
    if isinstance(values, Mapping):
        return values
    raise TypeError(f"cannot read counters from {type(obj).__name__}")


def build_counter_report(native, candidates) -> CounterReport:
    """Per-event geomean of candidate/native count ratios.

    native: benchmark -> {event: count}; candidates: candidate name ->
    same shape. A benchmark contributes to an event only when both
    sides carry a positive count; exclusions are footnoted. An event
    with no usable benchmark anywhere is dropped (also footnoted), and
    if nothing at all overlaps the report cannot be built.
    """
    native = {b: _counts(c) for b, c in native.items()}
    report = CounterReport(list(candidates))
    events = sorted({e for counts in native.values() for e in counts})
    for cand_name in report.candidate_names:
        cand = {b: _counts(c) for b, c in candidates[cand_name].items()}
        for event in events:
            ratios = []
            excluded = []
            for bench in sorted(native):
                nv = native[bench].get(event, 0)
                cv = cand.get(bench, {}).get(event, 0)
                if nv > 0 and cv > 0:
                    ratios.append(cv / nv)
                else:
                    excluded.append(bench)
            if ratios:
                report.geomeans.setdefault(event, {})[cand_name] = \
                    geomean(ratios)
                if excluded:
                    report.footnotes.append(
                        f"{event} ({cand_name}): excluded "
                        f"{', '.join(excluded)} (missing or zero count)")
            else:
                report.footnotes.append(
                    f"{event} ({cand_name}): no overlapping benchmarks")
    report.events = [e for e in events if e in report.geomeans]
    if not report.geomeans:
        raise NoOverlap("no event overlaps between native and candidates")
    return report


# -- emission ----------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.6g}"


def slowdown_markdown(report: SlowdownReport) -> str:
    header = ["Benchmark", f"{report.baseline_name} (ms)"]
    for name in report.candidate_names:
        header += [f"{name} (ms)", f"{name} ratio"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "---|" * len(header)]
    for row in report.rows:
        mean, se = row.stats[report.baseline_name]
        cells = [row.benchmark, f"{_fmt(mean)} ± {_fmt(se)}"]
        for name in report.candidate_names:
            mean, se = row.stats[name]
            cells += [f"{_fmt(mean)} ± {_fmt(se)}",
                      _fmt(row.ratios[name])]
        lines.append("| " + " | ".join(cells) + " |")
    for label, values in ((GEOMEAN_ROW, report.geomeans),
                          (MEDIAN_ROW, report.medians)):
        cells = [f"Slowdown: {label}", "--"]
        for name in report.candidate_names:
            cells += ["--", _fmt(values[name])]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def slowdown_csv(report: SlowdownReport) -> str:
    lines = ["benchmark,system,mean_ms,stderr_ms,ratio"]
    for row in report.rows:
        for name in report.systems:
            mean, se = row.stats[name]
            ratio = 1.0 if name == report.baseline_name else row.ratios[name]
            lines.append(
                f"{row.benchmark},{name},{_fmt(mean)},{_fmt(se)},{_fmt(ratio)}")
    for label, values in ((GEOMEAN_ROW, report.geomeans),
                          (MEDIAN_ROW, report.medians)):
        for name in report.candidate_names:
            lines.append(f"{label},{name},,,{_fmt(values[name])}")
    return "\n".join(lines) + "\n"


def counter_markdown(report: CounterReport) -> str:
    header = ["Event", *report.candidate_names]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "---|" * len(header)]
    for event in report.events:
        cells = [event]
        for name in report.candidate_names:
            value = report.geomeans[event].get(name)
            cells.append("--" if value is None else _fmt(value))
        lines.append("| " + " | ".join(cells) + " |")
    out = "\n".join(lines) + "\n"
    if report.footnotes:
        out += "\n" + "\n".join(f"- {note}" for note in report.footnotes) + "\n"
    return out


def counter_csv(report: CounterReport) -> str:
    lines = ["event,system,geomean_ratio"]
    for event in report.events:
        for name in report.candidate_names:
            value = report.geomeans[event].get(name)
            if value is not None:
                lines.append(f"{event},{name},{_fmt(value)}")
    return "\n".join(lines) + "\n"


# -- parsing (round-trip checks and downstream tooling) -----------------------

def parse_slowdown_csv(text: str) -> dict:
    """Invert slowdown_csv: {'cells': {(bench, system): (mean, se, ratio)},
    'aggregates': {(label, system): value}}."""
    cells: dict = {}
    aggregates: dict = {}
    lines = [ln for ln in text.splitlines() if ln]
    for line in lines[1:]:
        bench, system, mean, se, ratio = line.split(",")
        if bench in (GEOMEAN_ROW, MEDIAN_ROW):
            aggregates[(bench, system)] = float(ratio)
        else:
            cells[(bench, system)] = (float(mean), float(se), float(ratio))
    return {"cells": cells, "aggregates": aggregates}


def parse_slowdown_markdown(text: str) -> dict:
    """Invert slowdown_markdown into the parse_slowdown_csv shape."""
    lines = [ln for ln in text.splitlines() if ln.startswith("|")]
    header = [c.strip() for c in lines[0].strip("|").split("|")]
    baseline = header[1].removesuffix(" (ms)")
    candidates = [h.removesuffix(" (ms)")
                  for h in header[2::2]]
    cells: dict = {}
    aggregates: dict = {}
    for line in lines[2:]:
        parts = [c.strip() for c in line.strip("|").split("|")]
        name = parts[0]
        if name.startswith("Slowdown: "):
            label = name.removeprefix("Slowdown: ")
            for i, cand in enumerate(candidates):
                aggregates[(label, cand)] = float(parts[3 + 2 * i])
            continue
        base_mean, base_se = (float(v) for v in parts[1].split(" ± "))
        cells[(name, baseline)] = (base_mean, base_se, 1.0)
        for i, cand in enumerate(candidates):
            mean, se = (float(v) for v in parts[2 + 2 * i].split(" ± "))
            cells[(name, cand)] = (mean, se, float(parts[3 + 2 * i]))
    return {"cells": cells, "aggregates": aggregates}
