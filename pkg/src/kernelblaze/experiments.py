"""Experiment drivers over the synthetic environment, shared by the scripts and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from statistics import fmean
from typing import Iterable, Sequence

from . import catalog, icrl, simenv
from .agents import AgentRequest, Role, SimAgent, parse_structured, render_prompt
from .harness import run_pipeline
from .knowledge_base import KnowledgeBase, frozen_time
from .policy import Xoshiro256, derive_seed
from .profile import ProfileReport, format_profile_report, total_elapsed_cycles

TRAIN_SEEDS = tuple(range(20))
FRESH_SEEDS = tuple(range(100, 110))
SEARCH_DEPTH = 4
RUN_DEFAULTS = {"iterations": 10, "rollout_steps": SEARCH_DEPTH, "trajectories_per_task": 8}


def batch(seeds: Iterable[int]) -> list[simenv.SyntheticTask]:
    """Four-state, six-optimization tasks whose planted chain alternates between depth 2 and 3."""
    return [
        simenv.make_synthetic_task(s, {"n_states": 4, "n_opts": 6, "depth_of_best_chain": 2 + s % 2}) for s in seeds
    ]


@dataclass
class BatchRun:
    tasks: list[simenv.SyntheticTask]
    result: icrl.LoopResult

    def best(self, task_id: str) -> float:
        return self.result.best[task_id].speedup

    @property
    def speedups(self) -> list[float]:
        return [self.best(t.task_id) for t in self.tasks]

    @property
    def mean(self) -> float:
        return fmean(self.speedups)

    @property
    def geomean(self) -> float:
        return math.exp(fmean(math.log(s) for s in self.speedups))

    def optimality(self, depth: int = SEARCH_DEPTH) -> list[float]:
        return [self.best(t.task_id) / simenv.optimal_speedup(t, depth)["best_speedup"] for t in self.tasks]

    def attempts_to(self, fraction: float = 0.9, depth: int = SEARCH_DEPTH) -> list[float]:
        """Pipeline attempts per task until ``fraction`` of the optimum; inf when never reached."""
        out = []
        for t in self.tasks:
            target = fraction * simenv.optimal_speedup(t, depth)["best_speedup"]
            n = icrl.attempts_until([x for x in self.result.trajectories if x.task_id == t.task_id], target)
            out.append(math.inf if n is None else float(n))
        return out


def run_batch(
    tasks: Sequence[simenv.SyntheticTask],
    kb: KnowledgeBase | None = None,
    agent=None,
    **overrides,
) -> BatchRun:
    env = simenv.SimBackend(list(tasks))
    specs = [simenv.task_spec(t) for t in tasks]
    config = icrl.IcrlConfig(**{**RUN_DEFAULTS, **overrides})
    with frozen_time():
        result = icrl.run_loop(specs, kb if kb is not None else KnowledgeBase(), env, agent or SimAgent(), config)
    return BatchRun(list(tasks), result)


def sweep(tasks, key: str, values: Sequence[int], run_seeds: Sequence[int] = (0,), **fixed) -> dict[int, float]:
    """Mean best speedup per value of one config field, pooled over ``run_seeds``."""
    out = {}
    for v in values:
        runs = [run_batch(tasks, run_seed=s, **{**fixed, key: v}) for s in run_seeds]
        out[v] = fmean(sp for r in runs for sp in r.speedups)
    return out


def diminishing(
    means: dict[int, float], early: tuple[int, int], late: tuple[int, int], limit: float = 0.5
) -> tuple[bool, float]:
    """Non-decreasing means and a late marginal gain at most ``limit`` times the early one; returns (ok, ratio)."""
    values = [means[k] for k in sorted(means)]
    monotone = all(b >= a for a, b in zip(values, values[1:]))
    early_gain = means[early[1]] - means[early[0]]
    late_gain = means[late[1]] - means[late[0]]
    ratio = late_gain / early_gain if early_gain > 0 else math.inf
    return monotone and ratio <= limit, ratio


# ---------------------------------------------------------------------------
# ablations


class CyclesOnlyBackend(simenv.SimBackend):
    """Profiles keep elapsed cycles but drop every metric and stall counter."""

    def profile(self, task, variant_id):
        report = super().profile(task, variant_id)
        return ProfileReport(tuple(replace(k, metrics={}, stall_breakdown={}) for k in report.kernels))


def run_cycles_only(tasks: Sequence[simenv.SyntheticTask], **overrides) -> BatchRun:
    env = CyclesOnlyBackend(list(tasks))
    specs = [simenv.task_spec(t) for t in tasks]
    config = icrl.IcrlConfig(**{**RUN_DEFAULTS, **overrides})
    with frozen_time():
        result = icrl.run_loop(specs, KnowledgeBase(), env, SimAgent(), config)
    return BatchRun(list(tasks), result)


def loop_tokens(run: BatchRun) -> int:
    return sum(t.tokens_in + t.tokens_out for t in run.result.trajectories)


@dataclass
class MinimalRun:
    best: dict[str, float]
    tokens: int


def run_minimal_agent(tasks: Sequence[simenv.SyntheticTask], trajectories: int = 10, steps: int = 10, seed: int = 0) -> MinimalRun:
    """Memory-less baseline: each step sends the code and the raw profile and asks for any improvement.

    Without a knowledge base the optimization is a uniform draw from the whole
    vocabulary, and accepted variants always advance.
    """
    env = simenv.SimBackend(list(tasks))
    agent = SimAgent()
    best: dict[str, float] = {}
    tokens = 0
    vocabulary = sorted(catalog.OPTIMIZATIONS)
    for task in tasks:
        spec = simenv.task_spec(task)
        start = icrl.prepare_task(spec, env)
        best[task.task_id] = start.speedup
        for k in range(trajectories):
            rng = Xoshiro256(derive_seed(seed, "minimal", task.task_id, k))
            vid, code, report = start.variant_id, start.code, start.report
            for _ in range(steps):
                opt = vocabulary[int(rng.uniform() * len(vocabulary))]
                prompt = render_prompt(
                    Role.LOWERING, {"code": code, "optimization": opt, "profile_summary": format_profile_report(report)}
                )
                events: list = []

                def ask(text: str) -> str:
                    response = agent.complete(AgentRequest(Role.LOWERING, text, "code"))
                    events.append(response)
                    return parse_structured(response.text, "code")

                outcome = run_pipeline(ask(prompt), spec, env, repair=lambda stage, fb, c: ask(f"{prompt}\n// {stage} failed: {fb}\n"))
                tokens += sum(e.prompt_tokens + e.completion_tokens for e in events)
                if outcome.profiled:
                    vid, report = outcome.variant_id, outcome.report
                    code = env.source(spec, vid)
                    best[task.task_id] = max(best[task.task_id], start.baseline_cycles / total_elapsed_cycles(report))
    return MinimalRun(best, tokens)
