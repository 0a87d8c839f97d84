"""Deterministic synthetic optimization environment.

A synthetic task is a hidden state machine.  Each hidden state emits a metric
profile that the rule classifier maps to a known bottleneck label, and an
effect table says what every (state, optimization) pair does to the cycle
count.  Effects are drawn around a global ground truth (``catalog.WORLD_EFFECTS``)
so that what is learned on one task transfers to others, the way GPU
optimization knowledge does.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from pathlib import Path

import numpy as np

from . import catalog
from .errors import BackendError, DepthTooLarge, InvalidSpec, UnknownVariant
from .harness import CompileResult, ExecutionBackend, PipelineOutcome, Status, TaskSpec
from .profile import KernelProfile, ProfileReport
from .state_engine import ClassifierConfig, classify_bottleneck

MAX_ORACLE_DEPTH = 8
OUTPUT_SIZE = 16
SIM_LABELS = (*catalog.PREP_LABELS, catalog.PAYOFF_LABEL, catalog.TERMINAL_LABEL)

# metric levels used when emitting a hidden state's profile
_HIGH = 0.85
_SECOND = 0.6


@dataclass(frozen=True)
class Effect:
    cycle_factor: float
    next_state: str
    failure_mode: str = "none"  # none | compile | verify
    fail_seeds: tuple[int, ...] | None = None  # None: every seed fails
    removes_ops: tuple[str, ...] = ()
    external_calls: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {"cycle_factor": self.cycle_factor, "next_state": self.next_state, "failure_mode": self.failure_mode}
        if self.fail_seeds is not None:
            d["fail_seeds"] = list(self.fail_seeds)
        if self.removes_ops:
            d["removes_ops"] = list(self.removes_ops)
        if self.external_calls:
            d["external_calls"] = list(self.external_calls)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Effect:
        return cls(
            cycle_factor=float(d["cycle_factor"]),
            next_state=d["next_state"],
            failure_mode=d.get("failure_mode", "none"),
            fail_seeds=tuple(d["fail_seeds"]) if d.get("fail_seeds") is not None else None,
            removes_ops=tuple(d.get("removes_ops", ())),
            external_calls=tuple(d.get("external_calls", ())),
        )


@dataclass(frozen=True)
class HiddenState:
    name: str
    primary: str
    secondary: str | None
    metrics: dict[str, float]
    stalls: dict[str, float]
    n_kernels: int = 1


@dataclass
class SyntheticTask:
    task_id: str
    seed: int
    base_cycles: int
    baseline_cycles: int
    hidden_states: list[HiddenState]
    effect_table: dict[tuple[str, str], Effect]
    start_state: str
    declared_ops: list[str]
    opts: list[str] = field(default_factory=list)
    planted_chain: list[str] = field(default_factory=list)
    level: int = 2

    def state(self, name: str) -> HiddenState:
        for s in self.hidden_states:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "seed": self.seed,
            "level": self.level,
            "base_cycles": self.base_cycles,
            "baseline_cycles": self.baseline_cycles,
            "start_state": self.start_state,
            "declared_ops": list(self.declared_ops),
            "opts": list(self.opts),
            "planted_chain": list(self.planted_chain),
            "hidden_states": [
                {
                    "name": s.name,
                    "primary": s.primary,
                    "secondary": s.secondary,
                    "metrics": s.metrics,
                    "stalls": s.stalls,
                    "n_kernels": s.n_kernels,
                }
                for s in self.hidden_states
            ],
            "effect_table": [
                {"state": st, "opt": op, **eff.to_dict()} for (st, op), eff in sorted(self.effect_table.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticTask:
        return cls(
            task_id=d["task_id"],
            seed=int(d["seed"]),
            level=int(d.get("level", 2)),
            base_cycles=int(d["base_cycles"]),
            baseline_cycles=int(d["baseline_cycles"]),
            start_state=d["start_state"],
            declared_ops=list(d["declared_ops"]),
            opts=list(d.get("opts", [])),
            planted_chain=list(d.get("planted_chain", [])),
            hidden_states=[
                HiddenState(
                    s["name"], s["primary"], s["secondary"], dict(s["metrics"]), dict(s["stalls"]), int(s["n_kernels"])
                )
                for s in d["hidden_states"]
            ],
            effect_table={(e["state"], e["opt"]): Effect.from_dict(e) for e in d["effect_table"]},
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path: str | Path) -> SyntheticTask:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class SyntheticVariant:
    variant_id: str
    task_id: str
    hidden_state: str
    factor: float
    cumulative_cycles: int
    applied_ops: tuple[str, ...] = ()
    ops: tuple[str, ...] = ()
    calls: tuple[str, ...] = ()
    broken_seeds: tuple[int, ...] | None = None  # set for variants that fail verification


# ---------------------------------------------------------------------------
# generation


def _metric_profile(primary: str, secondary: str | None, rng: random.Random) -> tuple[dict, dict]:
    """Metrics whose rule scores give ``primary`` first and ``secondary`` second."""
    metrics = {
        "dram_throughput_pct": round(rng.uniform(10, 22), 2),
        "sm_fp_throughput_pct": round(rng.uniform(8, 20), 2),
        "achieved_occupancy_pct": round(rng.uniform(62, 80), 2),
    }
    stalls = {"long_scoreboard": round(rng.uniform(0.05, 0.15), 3), "barrier": round(rng.uniform(0.02, 0.08), 3)}

    def emit(label: str, level: float):
        level = round(level + rng.uniform(-0.03, 0.03), 3)
        if label == "dram_bandwidth_bound":
            metrics["dram_throughput_pct"] = round(level * 100, 2)
        elif label == "compute_fp_bound":
            metrics["sm_fp_throughput_pct"] = round(level * 100, 2)
        elif label == "occupancy_limited":
            metrics["achieved_occupancy_pct"] = round((1 - level) * 100, 2)
        elif label == "latency_stall_bound":
            stalls["long_scoreboard"] = level
            stalls["barrier"] = round(min(stalls["barrier"], 0.95 - level), 3)

    if primary not in ("balanced", "launch_overhead_bound"):
        emit(primary, _HIGH)
    if secondary is not None:
        emit(secondary, _SECOND)
    return metrics, stalls


def _split_cycles(cycles: int, n: int) -> list[int]:
    base, rem = divmod(cycles, n)
    return [base + (1 if i < rem else 0) for i in range(n)]


def emit_profile(task: SyntheticTask, state_name: str, cycles: int) -> ProfileReport:
    """Profile report of a variant with ``cycles`` total cycles in hidden state ``state_name``."""
    st = task.state(state_name)
    if st.primary == "launch_overhead_bound":
        n = max(9, math.ceil(cycles / 1500))
    else:
        n = st.n_kernels
    n = max(1, min(n, cycles))
    names = [f"{task.task_id}_k{i}" for i in range(min(n, 3))]
    counters: dict[str, int] = {}
    kernels = []
    for i, c in enumerate(_split_cycles(cycles, n)):
        name = names[i % len(names)]
        idx = counters.get(name, 0)
        counters[name] = idx + 1
        kernels.append(KernelProfile(name, idx, c, dict(st.metrics), dict(st.stalls)))
    return ProfileReport(tuple(kernels), "sim")


def _secondary_for(primary: str, rng: random.Random) -> str | None:
    if primary == catalog.TERMINAL_LABEL or rng.random() < 0.5:
        return None
    options = [l for l in ("dram_bandwidth_bound", "latency_stall_bound", "occupancy_limited", "compute_fp_bound") if l != primary]
    return rng.choice(options)


def _jitter(rng: random.Random, factor: float, kind: str) -> float:
    if kind == "decoy":
        return 1.0
    f = factor * math.exp(rng.uniform(-0.04, 0.04))
    if kind == "micro":
        f = min(max(f, 0.97), 0.999)
    elif kind == "regress":
        f = max(f, 1.0)
    return round(f, 4)


def make_synthetic_task(seed: int, spec: dict | None = None, task_id: str | None = None) -> SyntheticTask:
    """Generate a task deterministically from ``seed``.

    ``spec`` keys: n_states (>= 2), n_opts (>= 2), depth_of_best_chain (>= 1).
    The planted chain walks prep states into the compute-bound state, where the
    payoff optimization becomes available, and ends in the balanced state.
    """
    spec = {"n_states": 4, "n_opts": 6, "depth_of_best_chain": 2, **(spec or {})}
    n_states, n_opts, depth = int(spec["n_states"]), int(spec["n_opts"]), int(spec["depth_of_best_chain"])
    if n_states < 2 or n_opts < 2:
        raise InvalidSpec("n_states and n_opts must be at least 2")
    if n_states > len(SIM_LABELS):
        raise InvalidSpec(f"n_states must be at most {len(SIM_LABELS)}")
    if depth < 1 or depth + 1 > n_states or depth - 1 > len(catalog.PREP_LABELS):
        raise InvalidSpec("depth_of_best_chain must satisfy 1 <= depth <= n_states - 1")
    if n_opts < depth or n_opts > len(catalog.OPTIMIZATIONS):
        raise InvalidSpec(f"n_opts must lie in [{depth}, {len(catalog.OPTIMIZATIONS)}]")

    rng = random.Random(f"kernelblaze-task-{seed}")
    task_id = task_id or f"sim{seed:04d}"

    prep = rng.sample(catalog.PREP_LABELS, len(catalog.PREP_LABELS))
    chain_labels = prep[: depth - 1] + [catalog.PAYOFF_LABEL, catalog.TERMINAL_LABEL]
    spare = [l for l in SIM_LABELS if l not in chain_labels]
    rng.shuffle(spare)
    labels = chain_labels + spare[: n_states - len(chain_labels)]

    hidden = []
    for i, label in enumerate(labels):
        secondary = _secondary_for(label, rng)
        metrics, stalls = _metric_profile(label, secondary, rng)
        hidden.append(HiddenState(f"h{i}", label, secondary, metrics, stalls, rng.randint(1, 3)))
    by_label = {h.primary: h.name for h in hidden}
    chain_states = [by_label[l] for l in chain_labels]
    terminal = by_label[catalog.TERMINAL_LABEL]
    side_states = [by_label[l] for l in labels[len(chain_labels):]]

    # chain optimizations: a prep move per prep state, then the payoff move
    chain_opts = []
    for label in chain_labels[:-2]:
        preps = sorted(o for (l, o), (_, kind) in catalog.WORLD_EFFECTS.items() if l == label and kind == "prep")
        chain_opts.append(rng.choice(preps))
    chain_opts.append(catalog.PAYOFF_OPT)
    pool = sorted(set(catalog.OPTIMIZATIONS) - set(chain_opts))
    rng.shuffle(pool)
    opts = list(dict.fromkeys(chain_opts)) + pool
    opts = opts[: max(n_opts, len(set(chain_opts)))]

    ops_pool = ["matmul", "conv2d", "bias_add", "relu", "gelu", "softmax", "layernorm", "reduce_sum", "scale"]
    declared_ops = sorted(rng.sample(ops_pool, rng.randint(2, 4)))

    payoff_scale = 1.0
    for _ in range(50):
        effects: dict[tuple[str, str], Effect] = {}
        for h in hidden:
            for opt in opts:
                world = catalog.WORLD_EFFECTS.get((h.primary, opt))
                if world is None:
                    continue
                factor, kind = world
                if kind in ("compile", "verify"):
                    effects[(h.name, opt)] = Effect(round(factor, 4), h.name, kind)
                    continue
                f = _jitter(rng, factor, kind)
                if f >= 1.0 or h.name == terminal:
                    nxt = h.name
                elif side_states and h.name == chain_states[0] and rng.random() < 0.5:
                    nxt = rng.choice(side_states)
                else:
                    nxt = terminal
                effects[(h.name, opt)] = Effect(f, nxt)
        for i, opt in enumerate(chain_opts):
            src, dst = chain_states[i], chain_states[i + 1]
            world_f, kind = catalog.WORLD_EFFECTS[(hidden[i].primary, opt)]
            f = _jitter(rng, world_f, kind)
            if opt == catalog.PAYOFF_OPT:
                f = round(f * payoff_scale, 4)
            effects[(src, opt)] = Effect(f, dst)

        _plant_guarantees(effects, hidden, opts, chain_states, chain_opts, rng)
        task = SyntheticTask(
            task_id=task_id,
            seed=seed,
            base_cycles=rng.randint(50_000, 200_000),
            baseline_cycles=0,
            hidden_states=hidden,
            effect_table=effects,
            start_state=chain_states[0],
            declared_ops=declared_ops,
            opts=opts,
            planted_chain=chain_opts,
        )
        task.baseline_cycles = max(1, round(task.base_cycles * rng.uniform(0.4, 1.2)))
        if _chain_is_best(task, depth):
            break
        payoff_scale *= 0.85
    else:  # pragma: no cover - generator bug
        raise InvalidSpec(f"could not plant a dominant chain for seed {seed}")

    cfg = ClassifierConfig()
    for h in hidden:
        sig = classify_bottleneck(emit_profile(task, h.name, task.base_cycles), cfg)
        if (sig.primary_bottleneck, sig.secondary_bottleneck) != (h.primary, h.secondary):
            raise AssertionError(f"state {h.name} emits {sig.key}, intended {(h.primary, h.secondary)}")
    return task


def _plant_guarantees(effects, hidden, opts, chain_states, chain_opts, rng) -> None:
    """Make sure there is a no-gain decoy and a failing entry somewhere off the chain."""
    chain_pairs = set(zip(chain_states, chain_opts))
    free = [(h.name, o) for h in hidden for o in opts if (h.name, o) not in effects]
    rng.shuffle(free)
    if not any(e.cycle_factor >= 1.0 and e.failure_mode == "none" for e in effects.values()):
        cand = free.pop() if free else next(k for k in sorted(effects) if k not in chain_pairs)
        effects[cand] = Effect(1.0, cand[0])
    if not any(e.failure_mode != "none" for e in effects.values()):
        pairs = free or [k for k in sorted(effects) if k not in chain_pairs and effects[k].cycle_factor < 1.0]
        cand = pairs[-1]
        effects[cand] = Effect(0.8, cand[0], rng.choice(("compile", "verify")))


def _chain_is_best(task: SyntheticTask, depth: int) -> bool:
    """The planted chain beats every shorter sequence and is optimal at its own depth."""
    chain = _sequence_factor(task, task.planted_chain)
    return chain < min_factor(task, depth - 1) and math.isclose(chain, min_factor(task, depth), rel_tol=1e-12)


# ---------------------------------------------------------------------------
# transitions


def _step(task: SyntheticTask, state: str, opt: str) -> tuple[float, str]:
    """Factor and next state of one successful application (failures do not advance)."""
    eff = task.effect_table.get((state, opt))
    if eff is None or eff.failure_mode != "none":
        return 1.0, state
    return eff.cycle_factor, eff.next_state


def _sequence_factor(task: SyntheticTask, seq) -> float:
    state, f = task.start_state, 1.0
    for opt in seq:
        g, state = _step(task, state, opt)
        f *= g
    return f


def _factor_table(task: SyntheticTask):
    @lru_cache(maxsize=None)
    def best(state: str, remaining: int) -> float:
        if remaining == 0:
            return 1.0
        out = 1.0
        for opt in task.opts:
            f, nxt = _step(task, state, opt)
            out = min(out, f * best(nxt, remaining - 1))
        return out

    return best


def min_factor(task: SyntheticTask, depth: int, state: str | None = None) -> float:
    """Smallest cumulative cycle factor reachable in at most ``depth`` steps (memoized DP)."""
    return _factor_table(task)(state or task.start_state, depth)


def cycles_for(task: SyntheticTask, factor: float) -> int:
    return max(1, round(task.base_cycles * factor))


def optimal_speedup(task: SyntheticTask, depth: int) -> dict:
    """Best reachable baseline speedup with at most ``depth`` optimizations."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if depth > MAX_ORACLE_DEPTH:
        raise DepthTooLarge(f"depth {depth} exceeds {MAX_ORACLE_DEPTH}")
    best = _factor_table(task)
    f = best(task.start_state, depth)
    # recover one optimal chain (shortest first) for reporting
    chain: list[str] = []
    state, remaining, acc = task.start_state, depth, 1.0
    while remaining and not math.isclose(acc, f, rel_tol=1e-12):
        for opt in task.opts:
            g, nxt = _step(task, state, opt)
            if g < 1.0 and math.isclose(acc * g * best(nxt, remaining - 1), f, rel_tol=1e-12):
                chain.append(opt)
                state, acc, remaining = nxt, acc * g, remaining - 1
                break
        else:
            break
    return {"best_factor_chain": chain, "best_factor": f, "best_speedup": task.baseline_cycles / cycles_for(task, f)}


def start_variant(task: SyntheticTask) -> SyntheticVariant:
    return SyntheticVariant(
        variant_id=f"{task.task_id}:v0",
        task_id=task.task_id,
        hidden_state=task.start_state,
        factor=1.0,
        cumulative_cycles=task.base_cycles,
        ops=tuple(task.declared_ops),
    )


def _child_id(parent: str, opt: str) -> str:
    task_id = parent.split(":", 1)[0]
    return f"{task_id}:" + hashlib.sha1(f"{parent}/{opt}".encode()).hexdigest()[:12]


def derive_variant(task: SyntheticTask, variant: SyntheticVariant, opt_name: str) -> tuple[SyntheticVariant | None, str]:
    """Variant produced by applying ``opt_name`` plus the failure mode ("none" | "compile" | "verify")."""
    if variant.task_id != task.task_id:
        raise UnknownVariant(f"{variant.variant_id} does not belong to {task.task_id}")
    eff = task.effect_table.get((variant.hidden_state, opt_name))
    if eff is None:
        eff = Effect(1.0, variant.hidden_state)
    if eff.failure_mode == "compile":
        return None, "compile"
    factor = variant.factor * eff.cycle_factor
    child = SyntheticVariant(
        variant_id=_child_id(variant.variant_id, opt_name),
        task_id=task.task_id,
        hidden_state=eff.next_state,
        factor=factor,
        cumulative_cycles=cycles_for(task, factor),
        applied_ops=variant.applied_ops + (opt_name,),
        ops=tuple(o for o in variant.ops if o not in eff.removes_ops),
        calls=variant.calls + eff.external_calls,
        broken_seeds=(eff.fail_seeds if eff.fail_seeds is not None else ()) if eff.failure_mode == "verify" else None,
    )
    return child, eff.failure_mode


def apply_optimization(task: SyntheticTask, variant: SyntheticVariant, opt_name: str) -> tuple[SyntheticVariant, PipelineOutcome]:
    """Direct (agent-free) application of one optimization; the input variant is never mutated."""
    from .harness import Attempt, lint_variant

    child, failure = derive_variant(task, variant, opt_name)
    if failure == "compile":
        return variant, PipelineOutcome(Status.COMPILE_FAILED, attempts=[Attempt("compile", f"{opt_name}: build error")])
    if failure == "verify":
        return variant, PipelineOutcome(Status.VERIFY_FAILED, attempts=[Attempt("verify", f"{opt_name}: mismatch")])
    verdict = lint_variant(render_variant(task, child), render_reference(task))
    if not verdict.accepted:
        return variant, PipelineOutcome(Status.SOFT_VERIFY_FAILED, attempts=[Attempt("soft_verify", verdict.detail)])
    report = emit_profile(task, child.hidden_state, child.cumulative_cycles)
    return child, PipelineOutcome(Status.PROFILED, report=report, variant_id=child.variant_id)


# ---------------------------------------------------------------------------
# program text


def render_reference(task: SyntheticTask) -> str:
    return (
        f"// kernelblaze-sim reference {task.task_id}\n"
        f"// ops: {' '.join(task.declared_ops)}\n"
        "// calls:\n"
        "def forward(x):\n"
        + "".join(f"    x = {op}(x)\n" for op in task.declared_ops)
        + "    return x\n"
    )


def render_variant(task: SyntheticTask, v: SyntheticVariant) -> str:
    return (
        f"// kernelblaze-sim variant {v.variant_id}\n"
        f"// task: {task.task_id}\n"
        f"// ops: {' '.join(v.ops)}\n"
        f"// calls: {' '.join(v.calls)}\n"
        f"// applied: {' '.join(v.applied_ops)}\n"
        f"__global__ void {task.task_id}_kernel(const float* in, float* out) {{ /* synthetic body */ }}\n"
    )


def task_spec(task: SyntheticTask, synthetic_path: str | None = None) -> TaskSpec:
    return TaskSpec(
        task_id=task.task_id,
        level=task.level,
        reference_code=render_reference(task),
        starting_variant=render_variant(task, start_variant(task)),
        baseline_cycles=task.baseline_cycles,
        declared_ops=list(task.declared_ops),
        synthetic=synthetic_path,
    )


# ---------------------------------------------------------------------------
# backend


_PATCH_FIELD = re.compile(r"^\s*//\s*(parent|apply):[ \t]*(.*)$", re.MULTILINE)
_VARIANT_HEADER = re.compile(r"kernelblaze-sim variant (\S+)")


class SimBackend(ExecutionBackend):
    """ExecutionBackend over synthetic tasks.  Deterministic; unbounded sessions."""

    max_sessions = None

    def __init__(self, tasks: list[SyntheticTask] | None = None, *, fail_after: int | None = None, noise: float = 0.0):
        if noise < 0:
            raise ValueError("noise must be non-negative")
        self.noise = noise  # lognormal sigma on profiled cycles; 0 keeps runs exact
        self.tasks: dict[str, SyntheticTask] = {}
        self._variants: dict[str, SyntheticVariant] = {}
        self._lock = threading.Lock()
        self._calls = 0
        self.fail_after = fail_after  # fault injection: raise BackendError after this many compiles
        for t in tasks or []:
            self.add_task(t)

    def add_task(self, task: SyntheticTask) -> TaskSpec:
        self.tasks[task.task_id] = task
        v = start_variant(task)
        self._variants[v.variant_id] = v
        return task_spec(task)

    def _task(self, spec: TaskSpec) -> SyntheticTask:
        try:
            return self.tasks[spec.task_id]
        except KeyError:
            raise BackendError(f"sim backend has no task {spec.task_id!r}") from None

    def variant(self, variant_id: str) -> SyntheticVariant:
        try:
            return self._variants[variant_id]
        except KeyError:
            raise UnknownVariant(variant_id) from None

    def compile(self, task: TaskSpec, code: str) -> CompileResult:
        t = self._task(task)
        with self._lock:
            self._calls += 1
            if self.fail_after is not None and self._calls > self.fail_after:
                raise BackendError("simulated device lost")
        fields = {m.group(1): m.group(2).strip() for m in _PATCH_FIELD.finditer(code)}
        header = _VARIANT_HEADER.search(code)
        if "parent" not in fields:
            if header and header.group(1) in self._variants:
                return CompileResult(True, "", header.group(1))
            return CompileResult(False, "error: not a kernelblaze-sim program (missing parent/apply header)")
        parent = self._variants.get(fields["parent"])
        if parent is None or parent.task_id != t.task_id:
            return CompileResult(False, f"error: unknown parent variant {fields['parent']!r}")
        child, failure = derive_variant(t, parent, fields.get("apply", ""))
        if failure == "compile":
            return CompileResult(False, f"error: {fields.get('apply')} does not build in this configuration (ptxas: too much shared data)")
        with self._lock:
            self._variants.setdefault(child.variant_id, child)
        return CompileResult(True, "", child.variant_id)

    def reference_outputs(self, task: TaskSpec, seed: int) -> np.ndarray:
        t = self._task(task)
        return np.random.default_rng([t.seed, int(seed)]).standard_normal(OUTPUT_SIZE)

    def execute(self, task: TaskSpec, variant_id: str, seed: int) -> np.ndarray:
        v = self.variant(variant_id)
        out = self.reference_outputs(task, seed) * (1.0 + 1e-6)
        if v.broken_seeds is not None and (not v.broken_seeds or seed in v.broken_seeds):
            out = out + 0.5
        return out

    def profile(self, task: TaskSpec, variant_id: str) -> ProfileReport:
        t = self._task(task)
        v = self.variant(variant_id)
        cycles = v.cumulative_cycles
        if self.noise:
            rng = random.Random(f"kernelblaze-noise-{variant_id}")
            cycles = max(1, round(cycles * math.exp(rng.gauss(0.0, self.noise))))
        return emit_profile(t, v.hidden_state, cycles)

    def baseline(self, task: TaskSpec) -> int:
        return self._task(task).baseline_cycles

    def source(self, task: TaskSpec, variant_id: str) -> str:
        return render_variant(self._task(task), self.variant(variant_id))


def enumerate_all_sequences(task: SyntheticTask, depth: int) -> float:
    """Brute-force counterpart of ``min_factor``: every sequence of every length <= depth."""
    best = 1.0
    for length in range(1, depth + 1):
        for seq in product(task.opts, repeat=length):
            best = min(best, _sequence_factor(task, seq))
    return best
