"""In-context policy optimization loop.

One iteration runs ``trajectories_per_task`` rollouts per task against a frozen
copy of the knowledge base, archives them in a replay buffer, compares predicted
with measured gains, and folds the result back into the knowledge base.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import fmean
from types import SimpleNamespace
from typing import Any, Iterable

from . import knowledge_base as kbm
from .agents import AgentRequest, AgentResponse, MockAgent, Role, filter_items, parse_structured, render_prompt
from .errors import (
    AgentUnavailable,
    EmptyProposal,
    KernelBlazeError,
    ParseFailure,
    SchemaViolation,
)
from .harness import PipelineOutcome, RetryBudget, Status, TaskSpec, run_pipeline
from .knowledge_base import KnowledgeBase, OptimizationEntry, PerformanceState
from .policy import DEFAULT_TOP_K, derive_seed, entries_from_proposals, propose_new_optimizations, weighted_top_k
from .profile import ProfileReport, summarize_profile, total_elapsed_cycles
from .state_engine import (
    ClassifierConfig,
    PerformanceSignature,
    classify_bottleneck,
    extract_signature_live,
    match_state,
    state_for_signature,
)

logger = logging.getLogger(__name__)

ACCEPTED = "Accepted"
REJECTED = "Rejected"
MIN_OBSERVED_GAIN = 0.05  # EMA target for optimizations that only ever failed


@dataclass
class IcrlConfig:
    iterations: int = 10
    rollout_steps: int = 10
    trajectories_per_task: int = 8
    top_k: int = DEFAULT_TOP_K
    alpha: float = kbm.DEFAULT_ALPHA
    run_seed: int = 0
    jobs: int = 1
    reset_kb_each_iteration: bool = False
    live_state_extraction: bool = False
    agent_soft_verify: bool = True
    gap_agent: bool = False
    rewrite_descriptions: bool = False
    retry_budget: RetryBudget = field(default_factory=RetryBudget)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)

    def __post_init__(self):
        for name in ("iterations", "trajectories_per_task", "top_k", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.rollout_steps < 0:
            raise ValueError("rollout_steps must be non-negative")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("retry_budget", "classifier")}
        d["retry_budget"] = dict(self.retry_budget.__dict__)
        d["classifier"] = dict(self.classifier.__dict__)
        return d


@dataclass(frozen=True)
class RolloutStep:
    step_index: int
    state_id: str
    primary: str
    secondary: str | None
    variant_id: str
    opt_id: str
    predicted_gain: float
    produced_variant: str | None
    reward: float
    outcome: str
    reason: str | None = None
    cycles: int | None = None
    speedup: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> RolloutStep:
        return cls(**d)


@dataclass
class Trajectory:
    task_id: str
    trajectory_index: int
    seed: int
    iteration: int = 0
    steps: list[RolloutStep] = field(default_factory=list)
    start_variant: str = ""
    start_speedup: float = 0.0
    total_return: float = 0.0
    final_variant: str = ""
    best_variant: str = ""
    aborted: bool = False
    backend_error: bool = False
    error: str | None = None
    events: list[AgentResponse] = field(default_factory=list, repr=False)
    discovered_states: list[PerformanceState] = field(default_factory=list, repr=False)
    proposals: dict[str, list[OptimizationEntry]] = field(default_factory=dict, repr=False)

    @property
    def tokens_in(self) -> int:
        return sum(e.prompt_tokens for e in self.events)

    @property
    def tokens_out(self) -> int:
        return sum(e.completion_tokens for e in self.events)

    def role_tokens(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for e in self.events:
            acc = out.setdefault(e.role_id, [0, 0])
            acc[0] += e.prompt_tokens
            acc[1] += e.completion_tokens
        return dict(sorted(out.items()))

    def record(self, *, run_seed: int, best_speedup: float) -> dict:
        """One trajectory-log line."""
        return {
            "run_seed": run_seed,
            "iteration": self.iteration,
            "task_id": self.task_id,
            "trajectory_index": self.trajectory_index,
            "seed": self.seed,
            "start_variant": self.start_variant,
            "start_speedup": self.start_speedup,
            "steps": [s.to_dict() for s in self.steps],
            "R": self.total_return,
            "best_speedup": best_speedup,
            "final_variant": self.final_variant,
            "best_variant": self.best_variant,
            "aborted": self.aborted,
            "backend_error": self.backend_error,
            "error": self.error,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "tokens_by_role": self.role_tokens(),
        }

    @classmethod
    def from_record(cls, d: dict) -> Trajectory:
        traj = cls(
            task_id=d["task_id"],
            trajectory_index=d["trajectory_index"],
            seed=d["seed"],
            iteration=d["iteration"],
            steps=[RolloutStep.from_dict(s) for s in d["steps"]],
            start_variant=d.get("start_variant", ""),
            start_speedup=d.get("start_speedup", 0.0),
            total_return=d["R"],
            final_variant=d["final_variant"],
            best_variant=d["best_variant"],
            aborted=d["aborted"],
            backend_error=d["backend_error"],
            error=d["error"],
        )
        for role, (tin, tout) in d.get("tokens_by_role", {}).items():
            traj.events.append(AgentResponse("", tin, tout, role_id=role))
        return traj


class ReplayBuffer:
    """Append-only archive of (trajectory, return) pairs; safe for concurrent appends."""

    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self.entries: list[tuple[Trajectory, float]] = []
        self._lock = threading.Lock()

    def append(self, trajectory: Trajectory) -> None:
        with self._lock:
            self.entries.append((trajectory, trajectory.total_return))
            if self.capacity is not None and len(self.entries) > self.capacity:
                del self.entries[: len(self.entries) - self.capacity]

    def __len__(self) -> int:
        return len(self.entries)

    def trajectories(self, iteration: int | None = None) -> list[Trajectory]:
        """Entries (optionally of one iteration) in (iteration, task_id, trajectory_index) order."""
        with self._lock:
            items = [t for t, _ in self.entries if iteration is None or t.iteration == iteration]
        return sorted(items, key=lambda t: (t.iteration, t.task_id, t.trajectory_index))


@dataclass
class GapItem:
    state_id: str
    opt_id: str
    predicted_gain: float
    observed_gains: list[float]
    accepted_gains: list[float]

    @property
    def mean_observed(self) -> float:
        """Mean over accepted observations; 0 when every observation failed."""
        return fmean(self.accepted_gains) if self.accepted_gains else 0.0

    @property
    def discrepancy(self) -> float:
        return self.mean_observed - self.predicted_gain


@dataclass
class GapSummary:
    items: list[GapItem] = field(default_factory=list)

    def table(self) -> str:
        lines = ["state_id | opt_id | predicted | observed_mean | n | discrepancy"]
        for it in self.items:
            lines.append(
                f"{it.state_id} | {it.opt_id} | {it.predicted_gain:.3f} | {it.mean_observed:.3f} | "
                f"{len(it.observed_gains)} | {it.discrepancy:+.3f}"
            )
        return "\n".join(lines)


@dataclass
class ScoreUpdate:
    state_id: str
    opt_id: str
    observed_gain_mean: float


@dataclass
class AnalysisReport:
    score_updates: list[ScoreUpdate] = field(default_factory=list)
    new_optimizations: list[tuple[str, OptimizationEntry]] = field(default_factory=list)
    new_states: list[PerformanceState] = field(default_factory=list)
    rationale: str = ""

    @property
    def empty(self) -> bool:
        return not (self.score_updates or self.new_optimizations or self.new_states)


@dataclass(frozen=True)
class TaskBest:
    speedup: float
    variant_id: str
    valid: bool = True


@dataclass
class IterationResult:
    iteration: int
    trajectories: list[Trajectory] = field(default_factory=list)
    best: dict[str, TaskBest] = field(default_factory=dict)
    gap: GapSummary = field(default_factory=GapSummary)
    report: AnalysisReport = field(default_factory=AnalysisReport)
    backend_errors: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class StartPoint:
    """A task's verified starting variant."""

    variant_id: str
    code: str
    report: ProfileReport
    baseline_cycles: int

    @property
    def speedup(self) -> float:
        return self.baseline_cycles / total_elapsed_cycles(self.report)


# ---------------------------------------------------------------------------
# rollouts


def prepare_task(task: TaskSpec, env, *, soft_verifier=None) -> StartPoint | PipelineOutcome:
    """Verify and profile the starting variant; the failing outcome is returned as-is."""
    outcome = run_pipeline(task.starting_variant, task, env, soft_verifier=soft_verifier)
    if not outcome.profiled:
        return outcome
    baseline = task.baseline_cycles if task.baseline_cycles is not None else env.baseline(task)
    return StartPoint(outcome.variant_id, env.source(task, outcome.variant_id), outcome.report, int(baseline))


def _lower(agent, code: str, opt: OptimizationEntry, report: ProfileReport, events: list) -> str:
    prompt = render_prompt(
        Role.LOWERING,
        {"code": code, "optimization": opt.opt_id, "profile_summary": summarize_profile(report)},
    )
    response = agent.complete(AgentRequest(Role.LOWERING, prompt, "code"))
    events.append(response)
    return parse_structured(response.text, "code")


def _repairer(agent, opt: OptimizationEntry, report: ProfileReport, events: list):
    def repair(stage: str, feedback: str, code: str) -> str | None:
        annotated = f"{code}\n// previous {stage} failure: {feedback}\n"
        try:
            fixed = _lower(agent, annotated, opt, report, events)
        except (AgentUnavailable, ParseFailure):
            return None
        return None if fixed == code else fixed

    return repair


def run_rollout(
    task: TaskSpec,
    kb_snapshot: KnowledgeBase,
    env,
    agent,
    config: IcrlConfig,
    trajectory_index: int,
    *,
    iteration: int = 0,
    start: StartPoint | None = None,
) -> Trajectory:
    """One trajectory of at most ``config.rollout_steps`` steps; never mutates ``kb_snapshot``."""
    traj = Trajectory(
        task.task_id,
        trajectory_index,
        seed=derive_seed(config.run_seed, iteration, task.task_id, trajectory_index),
        iteration=iteration,
    )
    if start is None:
        prepared = prepare_task(task, env)
        if isinstance(prepared, PipelineOutcome):
            traj.aborted = True
            traj.backend_error = prepared.status is Status.BACKEND_ERROR
            traj.error = f"starting variant: {prepared.status.value}"
            return traj
        start = prepared

    vid, code, report = start.variant_id, start.code, start.report
    cycles = total_elapsed_cycles(report)
    traj.start_variant = traj.final_variant = traj.best_variant = vid
    traj.start_speedup = traj.total_return = start.speedup
    tried: dict[str, set[str]] = {}
    local_states: dict[str, PerformanceState] = {}
    verifier = agent if config.agent_soft_verify else None

    for t in range(config.rollout_steps):
        try:
            if config.live_state_extraction:
                sig = extract_signature_live(agent, report, code, config=config.classifier, events=traj.events)
            else:
                sig = classify_bottleneck(report, config.classifier)
            state, candidates = _resolve_state(kb_snapshot, local_states, traj, sig, agent, report)
        except (AgentUnavailable, EmptyProposal) as exc:
            traj.aborted, traj.error = True, f"{type(exc).__name__}: {exc}"
            break

        ranked = weighted_top_k(candidates, config.top_k, derive_seed(config.run_seed, iteration, task.task_id, trajectory_index, t))
        seen = tried.setdefault(vid, set())
        opt = next((c for c in ranked if c.opt_id not in seen), ranked[0])
        seen.add(opt.opt_id)

        step = dict(
            step_index=t,
            state_id=state.state_id,
            primary=sig.primary_bottleneck,
            secondary=sig.secondary_bottleneck,
            variant_id=vid,
            opt_id=opt.opt_id,
            predicted_gain=opt.predicted_gain,
        )
        try:
            candidate_code = _lower(agent, code, opt, report, traj.events)
        except ParseFailure as exc:
            traj.steps.append(RolloutStep(**step, produced_variant=None, reward=0.0, outcome=REJECTED, reason=f"lowering: {exc}"))
            continue
        except AgentUnavailable as exc:
            traj.aborted, traj.error = True, f"{type(exc).__name__}: {exc}"
            break

        outcome = run_pipeline(
            candidate_code,
            task,
            env,
            retry_budget=config.retry_budget,
            repair=_repairer(agent, opt, report, traj.events),
            soft_verifier=verifier,
        )
        if outcome.status is Status.BACKEND_ERROR:
            traj.aborted = traj.backend_error = True
            traj.error = outcome.attempts[-1].feedback if outcome.attempts else "backend error"
            break
        if not outcome.profiled:
            traj.steps.append(
                RolloutStep(**step, produced_variant=outcome.variant_id, reward=0.0, outcome=REJECTED, reason=outcome.status.value)
            )
            continue

        new_cycles = total_elapsed_cycles(outcome.report)
        speedup = start.baseline_cycles / new_cycles
        traj.steps.append(
            RolloutStep(
                **step,
                produced_variant=outcome.variant_id,
                reward=cycles / new_cycles,
                outcome=ACCEPTED,
                cycles=new_cycles,
                speedup=speedup,
            )
        )
        vid, report, cycles = outcome.variant_id, outcome.report, new_cycles
        code = env.source(task, vid)
        traj.final_variant = vid
        if speedup > traj.total_return:
            traj.total_return, traj.best_variant = speedup, vid
    return traj


def _resolve_state(snapshot, local_states, traj, sig: PerformanceSignature, agent, report):
    """Matched (or newly discovered) state and its candidate optimizations."""
    view = SimpleNamespace(states=[*snapshot.states, *local_states.values()])
    match = match_state(view, sig)
    if match.known:
        state = local_states.get(match.state_id) or snapshot.state(match.state_id)
    else:
        state = state_for_signature(sig)
        local_states[state.state_id] = state
        traj.discovered_states.append(state)
    candidates = list(state.optimizations) + traj.proposals.get(state.state_id, [])
    if not candidates:
        candidates = propose_new_optimizations(agent, state, report, events=traj.events)
        traj.proposals[state.state_id] = candidates
    return state, candidates


# ---------------------------------------------------------------------------
# evaluation and update


def policy_evaluation(buffer: ReplayBuffer | Iterable[Trajectory], kb: KnowledgeBase, iteration: int | None = None) -> GapSummary:
    """Group this iteration's steps by (state, optimization) and compare with predictions."""
    trajectories = buffer.trajectories(iteration) if isinstance(buffer, ReplayBuffer) else list(buffer)
    groups: dict[tuple[str, str], GapItem] = {}
    for traj in sorted(trajectories, key=lambda t: (t.iteration, t.task_id, t.trajectory_index)):
        for s in traj.steps:
            key = (s.state_id, s.opt_id)
            item = groups.get(key)
            if item is None:
                predicted = s.predicted_gain
                if kb.has_state(s.state_id) and (e := kb.state(s.state_id).get(s.opt_id)) is not None:
                    predicted = e.predicted_gain
                item = groups[key] = GapItem(s.state_id, s.opt_id, predicted, [], [])
            item.observed_gains.append(s.reward if s.outcome == ACCEPTED else 0.0)
            if s.outcome == ACCEPTED:
                item.accepted_gains.append(s.reward)
    return GapSummary([groups[k] for k in sorted(groups)])


def _rationale(g: GapSummary) -> str:
    if not g.items:
        return "No observations."
    over = sum(1 for it in g.items if it.discrepancy < 0)
    return f"{len(g.items)} (state, optimization) pairs observed; {over} over-predicted, {len(g.items) - over} under-predicted or exact."


def perf_gap_analysis(
    g: GapSummary,
    agent=None,
    *,
    kb: KnowledgeBase | None = None,
    events: list | None = None,
) -> AnalysisReport:
    """Score updates from the gap summary; a live agent may add states and optimizations."""
    report = AnalysisReport(
        score_updates=[ScoreUpdate(it.state_id, it.opt_id, it.mean_observed) for it in g.items],
        rationale=_rationale(g),
    )
    if agent is None or not g.items:
        return report
    known = sorted(s.state_id for s in kb.states) if kb is not None else []
    prompt = render_prompt(
        Role.PERF_GAP_ANALYSIS, {"gap_table": g.table(), "summary": report.rationale, "known_states": ", ".join(known) or "(none)"}
    )
    try:
        response = agent.complete(AgentRequest(Role.PERF_GAP_ANALYSIS, prompt, "analysis_report"))
        if events is not None:
            events.append(response)
        doc = parse_structured(response.text, "analysis_report")
    except (AgentUnavailable, ParseFailure) as exc:
        logger.warning("gap analysis agent failed (%s); deterministic report used", exc)
        return report

    report.rationale = doc.get("rationale") or report.rationale
    valid_ids = set(known)
    for item in filter_items(doc.get("new_states", []), "new_state", context=" (new_states)"):
        try:
            sig = PerformanceSignature(kbm.normalize_label(item["primary_bottleneck"]), item.get("secondary_bottleneck"))
            state = state_for_signature(sig, item.get("description", ""))
        except (KernelBlazeError, ValueError) as exc:
            logger.warning("dropped new state %r: %s", item, exc)
            continue
        if item.get("state_id"):
            state.state_id = kbm.slugify(item["state_id"])
        if item.get("display_name"):
            state.display_name = item["display_name"]
        if state.state_id in valid_ids:
            logger.warning("dropped new state %s: already known", state.state_id)
            continue
        valid_ids.add(state.state_id)
        report.new_states.append(state)
    for item in filter_items(doc.get("new_optimizations", []), "new_optimization", context=" (new_optimizations)"):
        state_id = kbm.slugify(item["state_id"])
        if state_id not in valid_ids:
            logger.warning("dropped optimization %r for unknown state %s", item.get("name"), state_id)
            continue
        for entry in entries_from_proposals([item]):
            report.new_optimizations.append((state_id, entry))
    return report


def parameter_update(
    kb: KnowledgeBase,
    report: AnalysisReport,
    alpha: float = kbm.DEFAULT_ALPHA,
    *,
    iteration: int | None = None,
) -> KnowledgeBase:
    """New states, then new optimizations, then EMA score updates; one update_count tick.

    Works on a copy: on SchemaViolation the input is left untouched and the error raised.
    """
    out = kb.copy()
    try:
        for state in report.new_states:
            out.add_state(replace(state, optimizations=[]), count_update=False)
            for entry in state.optimizations:
                out.add_optimization(state.state_id, replace(entry))
        for state_id, entry in report.new_optimizations:
            if out.state(state_id).get(entry.opt_id) is None:
                out.add_optimization(state_id, replace(entry))
        for u in report.score_updates:
            out.update_score(u.state_id, u.opt_id, max(u.observed_gain_mean, MIN_OBSERVED_GAIN), alpha, iteration)
        out.update_count += 1
        kbm.validate(out)
    except SchemaViolation:
        raise
    except (KernelBlazeError, ValueError) as exc:
        raise SchemaViolation(f"update refused: {exc}") from exc
    return out


def _discoveries(trajectories: list[Trajectory], kb: KnowledgeBase) -> tuple[list[PerformanceState], list[tuple[str, OptimizationEntry]]]:
    """States and proposals found during rollouts, first occurrence wins."""
    states: dict[str, PerformanceState] = {}
    opts: dict[tuple[str, str], OptimizationEntry] = {}
    for traj in trajectories:
        for st in traj.discovered_states:
            if not kb.has_state(st.state_id):
                states.setdefault(st.state_id, st)
        for state_id, entries in traj.proposals.items():
            for e in entries:
                if kb.has_state(state_id) and kb.state(state_id).get(e.opt_id) is not None:
                    continue
                opts.setdefault((state_id, e.opt_id), e)
    return list(states.values()), [(sid, e) for (sid, _), e in opts.items()]


def _rewrite_descriptions(kb: KnowledgeBase, report: AnalysisReport, agent, events: list) -> None:
    by_state: dict[str, list[str]] = {}
    for u in report.score_updates:
        by_state.setdefault(u.state_id, []).append(f"{u.opt_id}: {u.observed_gain_mean:.3f}")
    for state_id, lines in sorted(by_state.items()):
        if not kb.has_state(state_id):
            continue
        state = kb.state(state_id)
        prompt = render_prompt(
            Role.PARAMETER_UPDATE_REWRITER,
            {"state_id": state_id, "description": state.description or "(none)", "updates": "\n".join(lines)},
        )
        try:
            response = agent.complete(AgentRequest(Role.PARAMETER_UPDATE_REWRITER, prompt, "rewrite"))
            events.append(response)
            state.description = parse_structured(response.text, "rewrite")["description"]
        except (AgentUnavailable, ParseFailure) as exc:
            logger.info("description rewrite skipped for %s: %s", state_id, exc)


def _jobs_for(agent, config: IcrlConfig) -> int:
    # scripted responses are consumed in call order, so a scripted mock runs serially
    return 1 if isinstance(agent, MockAgent) else config.jobs


def run_iteration(
    tasks: list[TaskSpec],
    kb: KnowledgeBase,
    env,
    agent,
    config: IcrlConfig,
    iteration_index: int,
    *,
    buffer: ReplayBuffer | None = None,
    starts: dict[str, StartPoint] | None = None,
    previous_best: dict[str, TaskBest] | None = None,
    events: list | None = None,
) -> tuple[KnowledgeBase, IterationResult]:
    buffer = buffer if buffer is not None else ReplayBuffer()
    starts = starts if starts is not None else {}
    result = IterationResult(iteration_index, best=dict(previous_best or {}))
    if not tasks:
        return kb, result
    verifier = agent if config.agent_soft_verify else None

    runnable = []
    for task in sorted(tasks, key=lambda t: t.task_id):
        if task.task_id not in starts:
            prepared = prepare_task(task, env, soft_verifier=verifier)
            if isinstance(prepared, PipelineOutcome):
                msg = f"{task.task_id}: starting variant {prepared.status.value}"
                (result.backend_errors if prepared.status is Status.BACKEND_ERROR else result.errors).append(msg)
                result.best.setdefault(task.task_id, TaskBest(0.0, "", valid=False))
                continue
            starts[task.task_id] = prepared
        runnable.append(task)

    snapshot = kb.copy()
    jobs = [(task, i) for task in runnable for i in range(config.trajectories_per_task)]

    def work(job):
        task, i = job
        return run_rollout(task, snapshot, env, agent, config, i, iteration=iteration_index, start=starts[task.task_id])

    n_jobs = _jobs_for(agent, config)
    if n_jobs == 1:
        trajectories = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trajectories = list(pool.map(work, jobs))
    trajectories.sort(key=lambda t: (t.task_id, t.trajectory_index))

    for traj in trajectories:
        buffer.append(traj)
        if traj.backend_error:
            result.backend_errors.append(f"{traj.task_id}#{traj.trajectory_index}: {traj.error}")
        elif traj.aborted:
            result.errors.append(f"{traj.task_id}#{traj.trajectory_index}: {traj.error}")
        prev = result.best.get(traj.task_id)
        if prev is None or not prev.valid or traj.total_return > prev.speedup:
            result.best[traj.task_id] = TaskBest(traj.total_return, traj.best_variant)
    result.trajectories = trajectories

    result.gap = policy_evaluation(buffer, kb, iteration_index)
    report = perf_gap_analysis(result.gap, agent if config.gap_agent else None, kb=kb, events=events)
    new_states, new_opts = _discoveries(trajectories, kb)
    found = {s.state_id for s in new_states}
    report.new_states = [*new_states, *(s for s in report.new_states if s.state_id not in found)]
    seen = {(sid, e.opt_id) for sid, e in new_opts}
    report.new_optimizations = [*new_opts, *((sid, e) for sid, e in report.new_optimizations if (sid, e.opt_id) not in seen)]
    result.report = report

    try:
        updated = parameter_update(kb, report, config.alpha, iteration=iteration_index)
    except SchemaViolation as exc:
        logger.error("parameter update refused: %s", exc)
        result.errors.append(f"parameter_update: {exc}")
        return kb, result
    if config.rewrite_descriptions:
        _rewrite_descriptions(updated, report, agent, events if events is not None else [])
    return updated, result


@dataclass
class LoopResult:
    kb: KnowledgeBase
    iterations: list[IterationResult]
    buffer: ReplayBuffer

    @property
    def best(self) -> dict[str, TaskBest]:
        return self.iterations[-1].best if self.iterations else {}

    @property
    def trajectories(self) -> list[Trajectory]:
        return [t for it in self.iterations for t in it.trajectories]


def run_loop(tasks: list[TaskSpec], kb: KnowledgeBase, env, agent, config: IcrlConfig, *, events: list | None = None) -> LoopResult:
    """``config.iterations`` iterations with best-so-far carried across them."""
    initial = kb.copy()
    buffer = ReplayBuffer()
    starts: dict[str, StartPoint] = {}
    results: list[IterationResult] = []
    best: dict[str, TaskBest] = {}
    for k in range(config.iterations):
        if config.reset_kb_each_iteration and k:
            kb = initial.copy()
        kb, res = run_iteration(tasks, kb, env, agent, config, k, buffer=buffer, starts=starts, previous_best=best, events=events)
        best = res.best
        results.append(res)
    return LoopResult(kb, results, buffer)


def attempts_until(trajectories: Iterable[Trajectory], target: float) -> int | None:
    """Pipeline attempts spent (in log order) before a variant reached ``target`` speedup.

    Returns None when the target was never reached; a start variant already at
    target costs zero attempts.
    """
    used = 0
    for traj in trajectories:
        if traj.start_speedup >= target:
            return used
        for s in traj.steps:
            used += 1
            if s.outcome == ACCEPTED and s.speedup is not None and s.speedup >= target:
                return used
    return None


def write_trajectory_log(path, trajectories: list[Trajectory], run_seed: int) -> None:
    best: dict[str, float] = {}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in trajectories:
            best[t.task_id] = max(best.get(t.task_id, 0.0), t.total_return)
            fh.write(json.dumps(t.record(run_seed=run_seed, best_speedup=best[t.task_id]), sort_keys=True) + "\n")


def read_trajectory_log(path) -> list[Trajectory]:
    with open(path, encoding="utf-8") as fh:
        return [Trajectory.from_record(json.loads(line)) for line in fh if line.strip()]


def summary_records(trajectories: Iterable[Trajectory]) -> dict[str, dict[str, Any]]:
    """Per-task best speedup, validity and token totals from trajectory records."""
    out: dict[str, dict[str, Any]] = {}
    for t in trajectories:
        rec = out.setdefault(t.task_id, {"speedup": 0.0, "valid": False, "tokens_in": 0, "tokens_out": 0, "backend_error": False})
        if t.start_variant:
            rec["valid"] = True
            rec["speedup"] = max(rec["speedup"], t.total_return)
        rec["tokens_in"] += t.tokens_in
        rec["tokens_out"] += t.tokens_out
        rec["backend_error"] = rec["backend_error"] or t.backend_error
    return dict(sorted(out.items()))
