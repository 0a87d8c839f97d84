"""Per-kernel profiling reports: canonical CSV format, cycle totals, rewards."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .errors import EmptyProfile, MalformedProfile

HEADER = ("kernel_name", "invocation_index", "elapsed_cycles", "metric", "value")
STALL_PREFIX = "stall."


@dataclass(frozen=True)
class KernelProfile:
    kernel_name: str
    invocation_index: int
    elapsed_cycles: int
    metrics: dict[str, float] = field(default_factory=dict)
    stall_breakdown: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ProfileReport:
    kernels: tuple[KernelProfile, ...]
    source_tag: str = "sim"

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))

    def __len__(self) -> int:
        return len(self.kernels)


def _number(text: str, row: int, what: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise MalformedProfile(f"{what} is not a number: {text!r}", row) from None
    if not math.isfinite(x):
        raise MalformedProfile(f"{what} is not finite: {text!r}", row)
    return x


def parse_profile_report(text: str, source_tag: str = "sim") -> ProfileReport:
    """Parse the canonical profile CSV.

    One row per (invocation, metric).  Rows of one invocation are contiguous;
    an invocation with no metrics is written with empty metric/value cells.
    """
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if not rows or tuple(c.strip() for c in rows[0]) != HEADER:
        raise MalformedProfile(f"header must be {','.join(HEADER)}", 1)
    if len(rows) == 1:
        raise EmptyProfile("profile has no rows")

    kernels: list[KernelProfile] = []
    seen: set[tuple[str, int]] = set()
    current: tuple[str, int] | None = None
    cycles = 0
    metrics: dict[str, float] = {}
    stalls: dict[str, float] = {}

    def flush():
        if current is not None:
            kernels.append(KernelProfile(current[0], current[1], cycles, dict(metrics), dict(stalls)))

    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(HEADER):
            raise MalformedProfile(f"expected {len(HEADER)} columns, got {len(row)}", n)
        name, idx_text, cyc_text, metric, value = (c.strip() for c in row)
        if not name:
            raise MalformedProfile("empty kernel_name", n)
        try:
            idx = int(idx_text)
        except ValueError:
            raise MalformedProfile(f"invocation_index is not an integer: {idx_text!r}", n) from None
        if idx < 0:
            raise MalformedProfile("invocation_index must be non-negative", n)
        try:
            cyc = int(cyc_text)
        except ValueError:
            raise MalformedProfile(f"elapsed_cycles is not an integer: {cyc_text!r}", n) from None
        if cyc < 1:
            raise MalformedProfile(f"elapsed_cycles must be >= 1, got {cyc}", n)

        key = (name, idx)
        if key != current:
            if key in seen:
                raise MalformedProfile(f"rows of invocation {name}#{idx} are not contiguous", n)
            flush()
            seen.add(key)
            current, cycles, metrics, stalls = key, cyc, {}, {}
        elif cyc != cycles:
            raise MalformedProfile(f"elapsed_cycles changes within invocation {name}#{idx}", n)

        if metric:
            x = _number(value, n, metric)
            if metric.startswith(STALL_PREFIX):
                stalls[metric[len(STALL_PREFIX):]] = x
            else:
                metrics[metric] = x
        elif value:
            raise MalformedProfile("value without metric name", n)
    flush()
    for k in kernels:
        if sum(k.stall_breakdown.values()) > 1.0 + 1e-9:
            raise MalformedProfile(f"stall fractions of {k.kernel_name}#{k.invocation_index} sum above 1")
    return ProfileReport(tuple(kernels), source_tag)


def format_profile_report(report: ProfileReport) -> str:
    """Inverse of ``parse_profile_report`` (floats printed with ``repr`` so parsing is lossless)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for k in report.kernels:
        rows = [(m, v) for m, v in k.metrics.items()]
        rows += [(STALL_PREFIX + s, v) for s, v in k.stall_breakdown.items()]
        if not rows:
            w.writerow((k.kernel_name, k.invocation_index, k.elapsed_cycles, "", ""))
        for m, v in rows:
            w.writerow((k.kernel_name, k.invocation_index, k.elapsed_cycles, m, repr(float(v))))
    return buf.getvalue()


def total_elapsed_cycles(report: ProfileReport) -> int:
    if not report.kernels:
        raise EmptyProfile("empty profile report")
    return sum(k.elapsed_cycles for k in report.kernels)


def compute_reward(previous: ProfileReport, candidate: ProfileReport) -> float:
    """Step reward: speedup of ``candidate`` over the pre-action program."""
    return total_elapsed_cycles(previous) / total_elapsed_cycles(candidate)


def speedup_vs_baseline(baseline_cycles: int, candidate: ProfileReport) -> float:
    if baseline_cycles < 1:
        raise ValueError("baseline_cycles must be >= 1")
    return baseline_cycles / total_elapsed_cycles(candidate)


def aggregate_metrics(report: ProfileReport) -> tuple[dict[str, float], dict[str, float]]:
    """Cycle-weighted average of every metric and stall share across invocations.

    A metric missing from an invocation counts as absent there, so the weight
    is renormalised over the invocations that do report it.
    """
    if not report.kernels:
        raise EmptyProfile("empty profile report")

    def weighted(get) -> dict[str, float]:
        num: dict[str, float] = {}
        den: dict[str, int] = {}
        for k in report.kernels:
            for name, v in get(k).items():
                num[name] = num.get(name, 0.0) + v * k.elapsed_cycles
                den[name] = den.get(name, 0) + k.elapsed_cycles
        return {name: num[name] / den[name] for name in sorted(num)}

    return weighted(lambda k: k.metrics), weighted(lambda k: k.stall_breakdown)


def summarize_profile(report: ProfileReport) -> str:
    """Compact text rendering used inside agent prompts."""
    metrics, stalls = aggregate_metrics(report)
    lines = [f"invocations: {len(report.kernels)}", f"total_elapsed_cycles: {total_elapsed_cycles(report)}"]
    lines += [f"{k}: {v:.4g}" for k, v in metrics.items()]
    lines += [f"stall.{k}: {v:.4g}" for k, v in stalls.items()]
    return "\n".join(lines)
