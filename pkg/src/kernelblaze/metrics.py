"""Result statistics, token accounting and optimization-usage reports."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from statistics import fmean, median
from typing import Iterable, Sequence

from .errors import EmptyResults, UnsortedThresholds
from .knowledge_base import SUCCESS_THRESHOLD

STATS_NOTE = "speedup statistics use valid results only; valid_rate uses every result without a backend error"


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    valid: bool
    speedup: float
    tokens_in: int = 0
    tokens_out: int = 0
    backend_error: bool = False


def _counted(results: Iterable[TaskResult]) -> list[TaskResult]:
    rows = [r for r in results if not r.backend_error]
    if not rows:
        raise EmptyResults("no results without a backend error")
    return rows


def fast_p(results: Sequence[TaskResult], p: float) -> float:
    """Fraction of tasks that are valid and strictly faster than ``p``."""
    rows = _counted(results)
    return sum(1 for r in rows if r.valid and r.speedup > p) / len(rows)


def fast_p_curve(results: Sequence[TaskResult], thresholds: Sequence[float]) -> list[tuple[float, float]]:
    if not thresholds:
        raise UnsortedThresholds("thresholds must be non-empty")
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise UnsortedThresholds("thresholds must be ascending")
    rows = _counted(results)
    return [(float(p), fast_p(rows, p)) for p in thresholds]


@dataclass(frozen=True)
class SummaryRow:
    valid_rate: float
    mean: float
    geomean: float
    median: float
    min: float
    max: float
    pct_gt_1: float
    pct_lt_1: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def summarize(results: Sequence[TaskResult]) -> SummaryRow:
    rows = _counted(results)
    speeds = [r.speedup for r in rows if r.valid]
    valid_rate = len(speeds) / len(rows)
    if not speeds:
        nan = math.nan
        return SummaryRow(valid_rate, nan, nan, nan, nan, nan, 0.0, 0.0)
    positive = [s for s in speeds if s > 0]
    geo = math.exp(fmean(math.log(s) for s in positive)) if positive else math.nan
    return SummaryRow(
        valid_rate=valid_rate,
        mean=fmean(speeds),
        geomean=geo,
        median=median(speeds),
        min=min(speeds),
        max=max(speeds),
        pct_gt_1=sum(1 for s in speeds if s > 1.0) / len(speeds),
        pct_lt_1=sum(1 for s in speeds if s < 1.0) / len(speeds),
    )


def table_row(label: str, row: SummaryRow) -> str:
    """LaTeX table row in the ValidRate/Average/GeoMean/Med./Min/Max/%>1x/%<1x layout."""
    cells = [
        label,
        f"{row.valid_rate * 100:.0f}\\%",
        f"{row.mean:.3f}",
        f"{row.geomean:.3f}",
        f"{row.median:.3f}",
        f"{row.min:.3g}",
        f"{row.max:.2f}",
        f"{row.pct_gt_1 * 100:.2f}\\%",
        f"{row.pct_lt_1 * 100:.2f}\\%",
    ]
    return " & ".join(cells) + " \\\\"


# ---------------------------------------------------------------------------
# tokens and usage


def token_accounting(events) -> dict:
    total_in = total_out = 0
    per_role: dict[str, dict[str, int]] = {}
    for e in events:
        total_in += e.prompt_tokens
        total_out += e.completion_tokens
        acc = per_role.setdefault(e.role_id, {"in": 0, "out": 0})
        acc["in"] += e.prompt_tokens
        acc["out"] += e.completion_tokens
    return {"total_in": total_in, "total_out": total_out, "per_role": dict(sorted(per_role.items()))}


def usage_report(trajectories) -> dict:
    """Attempts and successes per optimization, visits per state, and accepted-step transitions."""
    attempts: Counter = Counter()
    successes: Counter = Counter()
    states: Counter = Counter()
    pair_gains: dict[tuple[str, str], list[float]] = defaultdict(list)
    for traj in trajectories:
        prev = None
        for s in traj.steps:
            attempts[s.opt_id] += 1
            states[s.state_id] += 1
            accepted = s.outcome == "Accepted"
            if accepted and s.reward > SUCCESS_THRESHOLD:
                successes[s.opt_id] += 1
            if accepted and prev is not None:
                pair_gains[(prev.opt_id, s.opt_id)].append(s.reward)
            prev = s if accepted else None
    return {
        "per_optimization": {
            k: {"attempts": attempts[k], "successes": successes[k]} for k in sorted(attempts)
        },
        "per_state": dict(sorted(states.items())),
        "transition_stats": {
            pair: {"count": len(g), "median_gain": median(g)} for pair, g in sorted(pair_gains.items())
        },
    }


# ---------------------------------------------------------------------------
# emission


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def summary_csv(rows: Sequence[tuple[str, SummaryRow]]) -> str:
    buf = io.StringIO()
    buf.write(f"# {STATS_NOTE}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "valid_rate", "mean", "geomean", "median", "min", "max", "pct_gt_1", "pct_lt_1"])
    for label, r in rows:
        w.writerow([label, *(_fmt(v) for v in r.as_dict().values())])
    return buf.getvalue()


def curve_csv(curve: Sequence[tuple[float, float]]) -> str:
    return "p,fraction\n" + "".join(f"{_fmt(p)},{_fmt(f)}\n" for p, f in curve)


def usage_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "key", "count", "successes_or_median_gain"])
    for opt, d in report["per_optimization"].items():
        w.writerow(["optimization", opt, d["attempts"], d["successes"]])
    for state, n in report["per_state"].items():
        w.writerow(["state", state, n, ""])
    for (a, b), d in report["transition_stats"].items():
        w.writerow(["transition", f"{a}->{b}", d["count"], _fmt(d["median_gain"])])
    return buf.getvalue()


def curve_svg(curve: Sequence[tuple[float, float]], title: str = "fast_p") -> str:
    """Standalone SVG line chart of a fast_p curve; byte-stable for equal inputs."""
    width, height, pad = 480, 320, 48
    ps = [p for p, _ in curve]
    lo, hi = min(ps), max(ps)
    span = (hi - lo) or 1.0

    def x(p: float) -> float:
        return pad + (p - lo) / span * (width - 2 * pad)

    def y(f: float) -> float:
        return height - pad - f * (height - 2 * pad)

    points = " ".join(f"{x(p):.2f},{y(f):.2f}" for p, f in curve)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for f in (0.0, 0.5, 1.0):
        parts.append(
            f'<text x="{pad - 6}" y="{y(f) + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="10">{f:.1f}</text>'
        )
    for p in (lo, hi):
        parts.append(
            f'<text x="{x(p):.2f}" y="{height - pad + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{p:g}</text>'
        )
    parts.append(f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{points}"/>')
    for p, f in curve:
        parts.append(f'<circle cx="{x(p):.2f}" cy="{y(f):.2f}" r="3" fill="steelblue"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
