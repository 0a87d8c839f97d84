"""Performance signatures: rule-based classification and knowledge-base matching."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import ParseFailure
from .knowledge_base import BOTTLENECK_TAXONOMY, KnowledgeBase, PerformanceState, normalize_label, slugify
from .profile import ProfileReport, aggregate_metrics, summarize_profile, total_elapsed_cycles

logger = logging.getLogger(__name__)


@dataclass
class ClassifierConfig:
    """Every threshold of the rule table lives here (overridable from the engine config)."""

    secondary_ratio: float = 0.5
    balanced_floor: float = 0.3
    occupancy_threshold_pct: float = 50.0
    launch_mean_cycles: float = 2000.0
    launch_min_invocations: int = 8


@dataclass(frozen=True)
class PerformanceSignature:
    primary_bottleneck: str
    secondary_bottleneck: str | None = None
    evidence: dict[str, float] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.secondary_bottleneck is not None and self.secondary_bottleneck == self.primary_bottleneck:
            raise ValueError("secondary bottleneck must differ from the primary")

    @property
    def key(self) -> tuple[str, str | None]:
        return (self.primary_bottleneck, self.secondary_bottleneck)


@dataclass(frozen=True)
class MatchResult:
    state_id: str | None = None
    quality: str | None = None  # "exact" or "partial" when known

    @property
    def known(self) -> bool:
        return self.state_id is not None


DISCOVERED = MatchResult()


def rule_scores(report: ProfileReport, config: ClassifierConfig | None = None) -> tuple[dict[str, float], dict[str, float]]:
    """Score every taxonomy rule on the cycle-weighted program aggregate.

    Returns (scores, evidence); evidence holds the aggregated inputs each rule read.
    """
    cfg = config or ClassifierConfig()
    metrics, stalls = aggregate_metrics(report)
    scores: dict[str, float] = {}
    evidence: dict[str, float] = {}

    def pct_rule(label: str, metric: str, invert: bool = False):
        if metric in metrics:
            v = metrics[metric]
            evidence[metric] = v
            scores[label] = (1.0 - v / 100.0) if invert else v / 100.0

    pct_rule("dram_bandwidth_bound", "dram_throughput_pct")
    pct_rule("compute_fp_bound", "sm_fp_throughput_pct")
    # optional rules; they only fire when the adapter reports the metric
    pct_rule("l2_bound", "l2_throughput_pct")
    pct_rule("shared_memory_bound", "shared_throughput_pct")
    pct_rule("compute_int_bound", "sm_int_throughput_pct")
    pct_rule("sync_overhead_bound", "sync_overhead_pct")
    pct_rule("register_pressure_bound", "register_spill_pct")
    pct_rule("divergence_bound", "branch_efficiency_pct", invert=True)

    if stalls:
        worst = max(stalls.values())
        evidence["max_stall_fraction"] = worst
        scores["latency_stall_bound"] = worst

    if "achieved_occupancy_pct" in metrics:
        occ = metrics["achieved_occupancy_pct"]
        evidence["achieved_occupancy_pct"] = occ
        scores["occupancy_limited"] = 1.0 - occ / 100.0 if occ < cfg.occupancy_threshold_pct else 0.0

    n = len(report.kernels)
    mean_cycles = total_elapsed_cycles(report) / n
    evidence["invocations"] = float(n)
    evidence["mean_invocation_cycles"] = mean_cycles
    if mean_cycles < cfg.launch_mean_cycles and n > cfg.launch_min_invocations:
        scores["launch_overhead_bound"] = 1.0
    return scores, evidence


def classify_bottleneck(report: ProfileReport, config: ClassifierConfig | None = None) -> PerformanceSignature:
    """Deterministic stand-in for the profiling-driven state extractor."""
    cfg = config or ClassifierConfig()
    scores, evidence = rule_scores(report, cfg)
    order = {label: i for i, label in enumerate(BOTTLENECK_TAXONOMY)}
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], order[kv[0]]))
    if not ranked or ranked[0][1] <= cfg.balanced_floor:
        return PerformanceSignature("balanced", None, evidence)
    primary, top = ranked[0]
    secondary = None
    if len(ranked) > 1:
        label, score = ranked[1]
        if score > cfg.balanced_floor and score >= cfg.secondary_ratio * top:
            secondary = label
    return PerformanceSignature(primary, secondary, evidence)


def match_state(kb: KnowledgeBase, sig: PerformanceSignature) -> MatchResult:
    """Exact (primary, secondary) match first, then primary-only.

    Ties go to the state with more total observations, then the smallest state_id.
    """

    def best(states: list[PerformanceState]) -> str:
        return min(states, key=lambda s: (-s.total_observations, s.state_id)).state_id

    exact = [s for s in kb.states if (s.primary_bottleneck, s.secondary_bottleneck) == sig.key]
    if exact:
        return MatchResult(best(exact), "exact")
    partial = [s for s in kb.states if s.primary_bottleneck == sig.primary_bottleneck]
    if partial:
        return MatchResult(best(partial), "partial")
    return DISCOVERED


def state_for_signature(sig: PerformanceSignature, description: str = "") -> PerformanceState:
    """Fresh knowledge-base state keyed by ``sig``."""
    if sig.secondary_bottleneck:
        display = f"{sig.primary_bottleneck} / {sig.secondary_bottleneck}"
    else:
        display = sig.primary_bottleneck
    return PerformanceState(
        state_id=slugify(display),
        display_name=display,
        primary_bottleneck=sig.primary_bottleneck,
        secondary_bottleneck=sig.secondary_bottleneck,
        description=description,
    )


def signature_from_payload(payload: dict, evidence: dict[str, float] | None = None) -> PerformanceSignature:
    primary = payload.get("primary") or payload.get("primary_bottleneck")
    if not isinstance(primary, str) or not primary.strip():
        raise ParseFailure("signature needs a primary bottleneck")
    secondary = payload.get("secondary", payload.get("secondary_bottleneck"))
    primary = normalize_label(primary)
    if isinstance(secondary, str) and secondary.strip():
        secondary = normalize_label(secondary)
        if secondary == primary:
            secondary = None
    else:
        secondary = None
    return PerformanceSignature(primary, secondary, dict(evidence or {}))


def extract_signature_live(
    agent,
    report: ProfileReport,
    code_excerpt: str,
    *,
    attempts: int = 2,
    config: ClassifierConfig | None = None,
    events: list | None = None,
) -> PerformanceSignature:
    """Ask the state-extractor agent for a signature; fall back to the rule table.

    Transport failures (AgentUnavailable) propagate; unparseable answers do not.
    """
    from .agents import AgentRequest, Role, parse_structured, render_prompt

    prompt = render_prompt(
        Role.STATE_EXTRACTOR,
        {
            "profile_summary": summarize_profile(report),
            "code": code_excerpt,
            "taxonomy": ", ".join(BOTTLENECK_TAXONOMY),
        },
    )
    for _ in range(attempts):
        response = agent.complete(AgentRequest(Role.STATE_EXTRACTOR, prompt, "signature"))
        if events is not None:
            events.append(response)
        try:
            return signature_from_payload(parse_structured(response.text, "signature"))
        except ParseFailure as exc:
            logger.info("state extractor answer rejected: %s", exc)
    logger.info("state extractor fell back to the rule table")
    return classify_bottleneck(report, config)
