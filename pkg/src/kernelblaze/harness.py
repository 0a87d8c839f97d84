"""Execute-and-validate pipeline: compile, verify on several seeds, soft-verify, profile."""

from __future__ import annotations

import abc
import enum
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import AgentUnavailable, BackendError, ParseFailure, ShapeMismatch
from .profile import ProfileReport

logger = logging.getLogger(__name__)

DENYLIST = ("cublas", "cudnn", "cutlass", "thrust::", "torch::", "at::", "cusparse", "cufft")


class Status(str, enum.Enum):
    PROFILED = "Profiled"
    COMPILE_FAILED = "CompileFailed"
    VERIFY_FAILED = "VerifyFailed"
    SOFT_VERIFY_FAILED = "SoftVerifyFailed"
    BACKEND_ERROR = "BackendError"


@dataclass(frozen=True)
class VerificationSpec:
    seeds: tuple[int, ...] = (0, 1, 2)
    relative_tolerance: float = 1e-2
    absolute_tolerance: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("at least one verification seed is required")
        if self.relative_tolerance <= 0 or self.absolute_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class RetryBudget:
    compile: int = 3
    verify: int = 2


@dataclass(frozen=True)
class Attempt:
    stage: str
    feedback: str


@dataclass
class PipelineOutcome:
    status: Status
    report: ProfileReport | None = None
    attempts: list[Attempt] = field(default_factory=list)
    variant_id: str | None = None
    variant_code: str = ""

    def __post_init__(self):
        if (self.report is not None) != (self.status is Status.PROFILED):
            raise ValueError("a report is present exactly when the status is Profiled")

    @property
    def profiled(self) -> bool:
        return self.status is Status.PROFILED


@dataclass(frozen=True)
class VerificationResult:
    passed: bool
    seed: int | None = None
    max_rel_err: float = 0.0
    max_abs_err: float = 0.0


@dataclass(frozen=True)
class SoftVerdict:
    accepted: bool
    reason: str | None = None  # functionality_removed | external_library | other
    detail: str = ""


@dataclass(frozen=True)
class CompileResult:
    ok: bool
    diagnostics: str = ""
    variant_id: str | None = None


@dataclass
class TaskSpec:
    """A task as the harness sees it (paths already resolved to text)."""

    task_id: str
    reference_code: str
    starting_variant: str
    baseline_cycles: int | None = None
    level: int = 1
    verification: VerificationSpec = field(default_factory=VerificationSpec)
    declared_ops: list[str] = field(default_factory=list)
    synthetic: str | None = None  # path to a synthetic task dump, for the sim backend

    @classmethod
    def from_file(cls, path: str | Path) -> TaskSpec:
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        base = path.parent

        def text(key: str) -> str:
            return (base / doc[key]).read_text(encoding="utf-8")

        ver = doc.get("verification") or {}
        baseline = doc.get("baseline_cycles")
        return cls(
            task_id=doc["task_id"],
            level=int(doc.get("level", 1)),
            reference_code=text("reference_code"),
            starting_variant=text("starting_variant"),
            baseline_cycles=int(baseline) if isinstance(baseline, (int, float)) else None,
            verification=VerificationSpec(
                seeds=tuple(ver.get("seeds", (0, 1, 2))),
                relative_tolerance=float(ver.get("relative_tolerance", 1e-2)),
                absolute_tolerance=float(ver.get("absolute_tolerance", 1e-3)),
            ),
            declared_ops=list(doc.get("declared_ops", [])),
            synthetic=str(base / doc["synthetic"]) if doc.get("synthetic") else None,
        )


class ExecutionBackend(abc.ABC):
    """Where candidate programs are compiled, run and profiled.

    Implementations raise BackendError for infrastructure faults only; a
    candidate that fails to compile is a CompileResult with ``ok=False``.
    """

    max_sessions: int | None = None  # None means unbounded

    @abc.abstractmethod
    def compile(self, task: TaskSpec, code: str) -> CompileResult: ...

    @abc.abstractmethod
    def execute(self, task: TaskSpec, variant_id: str, seed: int) -> np.ndarray: ...

    @abc.abstractmethod
    def reference_outputs(self, task: TaskSpec, seed: int) -> np.ndarray: ...

    @abc.abstractmethod
    def profile(self, task: TaskSpec, variant_id: str) -> ProfileReport: ...

    @abc.abstractmethod
    def baseline(self, task: TaskSpec) -> int: ...

    @abc.abstractmethod
    def source(self, task: TaskSpec, variant_id: str) -> str:
        """Realized source of a compiled variant (what soft verification inspects)."""


# ---------------------------------------------------------------------------
# verification


def verify_numerical(
    candidate_outputs: Mapping[int, np.ndarray],
    reference_outputs: Mapping[int, np.ndarray],
    spec: VerificationSpec,
) -> VerificationResult:
    """Pass iff every element satisfies |c - r| <= atol + rtol * |r| for every seed."""
    worst_rel = worst_abs = 0.0
    for seed in spec.seeds:
        c = np.asarray(candidate_outputs[seed], dtype=np.float64)
        r = np.asarray(reference_outputs[seed], dtype=np.float64)
        if c.shape != r.shape:
            raise ShapeMismatch(f"seed {seed}: candidate {c.shape} vs reference {r.shape}")
        diff = np.abs(c - r)
        abs_err = float(diff.max()) if diff.size else 0.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            rel = np.where(r != 0, diff / np.abs(r), np.where(diff == 0, 0.0, np.inf))
        rel_err = float(rel.max()) if rel.size else 0.0
        bad = ~(diff <= spec.absolute_tolerance + spec.relative_tolerance * np.abs(r))
        if bad.any():
            return VerificationResult(False, seed, rel_err, abs_err)
        worst_rel, worst_abs = max(worst_rel, rel_err), max(worst_abs, abs_err)
    return VerificationResult(True, None, worst_rel, worst_abs)


_MANIFEST = re.compile(r"^\s*//\s*(ops|calls):[ \t]*(.*)$", re.MULTILINE)


def code_manifest(code: str) -> dict[str, list[str] | None]:
    """Read ``// ops:`` and ``// calls:`` manifest lines (None when absent)."""
    out: dict[str, list[str] | None] = {"ops": None, "calls": None}
    for key, value in _MANIFEST.findall(code):
        out[key] = value.split()
    return out


def lint_variant(candidate_code: str, reference_code: str, denylist: Sequence[str] = DENYLIST) -> SoftVerdict:
    """Rule-based soft verification on the declared-operations manifest."""
    cand = code_manifest(candidate_code)
    ref = code_manifest(reference_code)
    lowered = candidate_code.lower()
    for symbol in denylist:
        if symbol in lowered:
            return SoftVerdict(False, "external_library", f"candidate references {symbol}")
    if cand["ops"] is not None and ref["ops"] is not None:
        missing = [op for op in ref["ops"] if op not in cand["ops"]]
        if missing:
            return SoftVerdict(False, "functionality_removed", "missing operations: " + " ".join(missing))
    return SoftVerdict(True)


def soft_verify(agent, candidate_code: str, reference_code: str) -> SoftVerdict:
    """Agent-backed structural check; the lint answers when there is no agent or it fails."""
    if agent is None:
        return lint_variant(candidate_code, reference_code)
    from .agents import AgentRequest, Role, parse_structured, render_prompt

    prompt = render_prompt(Role.SOFT_VERIFIER, {"reference_code": reference_code, "candidate_code": candidate_code})
    try:
        doc = parse_structured(agent.complete(AgentRequest(Role.SOFT_VERIFIER, prompt, "soft_verdict")).text, "soft_verdict")
    except (AgentUnavailable, ParseFailure) as exc:
        logger.info("soft verifier unavailable (%s); using the lint", exc)
        return lint_variant(candidate_code, reference_code)
    if doc["verdict"] == "accept":
        return SoftVerdict(True, None, doc.get("detail", ""))
    return SoftVerdict(False, doc.get("reason") or "other", doc.get("detail", ""))


# ---------------------------------------------------------------------------
# pipeline

Repair = Callable[[str, str, str], "str | None"]


def run_pipeline(
    variant_code: str,
    task: TaskSpec,
    backend: ExecutionBackend,
    spec: VerificationSpec | None = None,
    retry_budget: RetryBudget | None = None,
    *,
    repair: Repair | None = None,
    soft_verifier=None,
) -> PipelineOutcome:
    """compile -> verify(seeds) -> soft-verify -> profile, in that fixed order.

    ``repair(stage, feedback, code)`` returns a repaired program (or None to give
    up) after a compile or verification failure, within ``retry_budget``.
    """
    spec = spec or task.verification
    budget = retry_budget or RetryBudget()
    attempts: list[Attempt] = []
    compile_repairs = verify_repairs = 0
    code = variant_code

    def retry(stage: str, feedback: str) -> str | None:
        if repair is None:
            return None
        return repair(stage, feedback, code)

    try:
        while True:
            compiled = backend.compile(task, code)
            if not compiled.ok:
                attempts.append(Attempt("compile", compiled.diagnostics))
                if compile_repairs >= budget.compile or (code := retry("compile", compiled.diagnostics)) is None:
                    return PipelineOutcome(Status.COMPILE_FAILED, attempts=attempts, variant_code=variant_code)
                compile_repairs += 1
                continue
            attempts.append(Attempt("compile", "ok"))
            vid = compiled.variant_id

            cand = {s: backend.execute(task, vid, s) for s in spec.seeds}
            ref = {s: backend.reference_outputs(task, s) for s in spec.seeds}
            try:
                result = verify_numerical(cand, ref, spec)
            except ShapeMismatch as exc:
                result = VerificationResult(False, None, float("inf"), float("inf"))
                feedback = f"output shape mismatch: {exc}"
            else:
                feedback = (
                    f"seed {result.seed}: max_rel_err={result.max_rel_err:.3g} max_abs_err={result.max_abs_err:.3g}"
                )
            if not result.passed:
                attempts.append(Attempt("verify", feedback))
                if verify_repairs >= budget.verify or (code := retry("verify", feedback)) is None:
                    return PipelineOutcome(Status.VERIFY_FAILED, attempts=attempts, variant_id=vid, variant_code=variant_code)
                verify_repairs += 1
                continue
            attempts.append(Attempt("verify", "ok"))

            realized = backend.source(task, vid)
            verdict = soft_verify(soft_verifier, realized, task.reference_code)
            if not verdict.accepted:
                attempts.append(Attempt("soft_verify", f"{verdict.reason}: {verdict.detail}"))
                return PipelineOutcome(Status.SOFT_VERIFY_FAILED, attempts=attempts, variant_id=vid, variant_code=code)
            attempts.append(Attempt("soft_verify", "ok"))

            report = backend.profile(task, vid)
            attempts.append(Attempt("profile", "ok"))
            return PipelineOutcome(Status.PROFILED, report=report, attempts=attempts, variant_id=vid, variant_code=code)
    except BackendError as exc:
        attempts.append(Attempt("backend", str(exc)))
        return PipelineOutcome(Status.BACKEND_ERROR, attempts=attempts, variant_code=variant_code)
