"""Persistent knowledge base of performance states and scored optimizations.

The knowledge base is the mutable "policy parameters" of the search loop.  It is
stored as a canonical JSON document (sorted keys, floats at 6 significant
digits) so that two saves of the same value are byte-identical.
"""

from __future__ import annotations

import contextlib
import copy
import datetime as _dt
import json
import logging
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import jsonschema

from .errors import (
    DuplicateOptimization,
    DuplicateState,
    MalformedFile,
    SchemaViolation,
    UnknownOptimization,
    UnknownState,
    VersionMismatch,
    VersionUnsupported,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
SOFT_SIZE_CAP = 512 * 1024
SUCCESS_THRESHOLD = 1.01
DEFAULT_ALPHA = 0.3

BOTTLENECK_TAXONOMY = (
    "dram_bandwidth_bound",
    "l2_bound",
    "shared_memory_bound",
    "compute_fp_bound",
    "compute_int_bound",
    "latency_stall_bound",
    "occupancy_limited",
    "launch_overhead_bound",
    "sync_overhead_bound",
    "divergence_bound",
    "register_pressure_bound",
    "balanced",
)

_SLUG_RE = re.compile(r"[^a-z0-9]+")
_LABEL_RE = re.compile(r"^[a-z0-9]+(_[a-z0-9]+)*$")


class KBSizeWarning(UserWarning):
    """Serialized knowledge base exceeds the soft size cap."""


def slugify(text: str) -> str:
    """Lowercase, runs of non-alphanumerics become one underscore."""
    return _SLUG_RE.sub("_", text.lower()).strip("_")


def is_valid_label(label: str) -> bool:
    if label in BOTTLENECK_TAXONOMY:
        return True
    return label.startswith("x-") and bool(_LABEL_RE.match(label[2:]))


def normalize_label(label: str) -> str:
    """Map an arbitrary label onto the taxonomy, or an ``x-`` custom label."""
    if label in BOTTLENECK_TAXONOMY:
        return label
    if label.startswith("x-"):
        label = label[2:]
    slug = slugify(label)
    if slug in BOTTLENECK_TAXONOMY:
        return slug
    return "x-" + (slug or "unknown")


# ---------------------------------------------------------------------------
# clock

_frozen_time: str | None = None


def now_rfc3339() -> str:
    if _frozen_time is not None:
        return _frozen_time
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).strftime("%Y-%m-%dT%H:%M:%SZ")


@contextlib.contextmanager
def frozen_time(timestamp: str = "2000-01-01T00:00:00Z") -> Iterator[str]:
    """Pin every timestamp written by the knowledge base (reproducibility runs)."""
    global _frozen_time
    previous = _frozen_time
    _frozen_time = timestamp
    try:
        yield timestamp
    finally:
        _frozen_time = previous


# ---------------------------------------------------------------------------
# domain types


@dataclass
class OptimizationEntry:
    opt_id: str
    name: str
    description: str = ""
    predicted_gain: float = 1.0
    observation_count: int = 0
    success_count: int = 0
    last_updated_iteration: int = -1

    def to_dict(self) -> dict[str, Any]:
        return {
            "opt_id": self.opt_id,
            "name": self.name,
            "description": self.description,
            "predicted_gain": float(self.predicted_gain),
            "observation_count": self.observation_count,
            "success_count": self.success_count,
            "last_updated_iteration": self.last_updated_iteration,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> OptimizationEntry:
        return cls(
            opt_id=d["opt_id"],
            name=d["name"],
            description=d["description"],
            predicted_gain=float(d["predicted_gain"]),
            observation_count=int(d["observation_count"]),
            success_count=int(d["success_count"]),
            last_updated_iteration=int(d["last_updated_iteration"]),
        )


@dataclass
class PerformanceState:
    state_id: str
    display_name: str
    primary_bottleneck: str
    secondary_bottleneck: str | None = None
    description: str = ""
    optimizations: list[OptimizationEntry] = field(default_factory=list)

    @property
    def total_observations(self) -> int:
        return sum(o.observation_count for o in self.optimizations)

    def get(self, opt_id: str) -> OptimizationEntry | None:
        for o in self.optimizations:
            if o.opt_id == opt_id:
                return o
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "state_id": self.state_id,
            "display_name": self.display_name,
            "primary_bottleneck": self.primary_bottleneck,
            "secondary_bottleneck": self.secondary_bottleneck,
            "description": self.description,
            "optimizations": [o.to_dict() for o in self.optimizations],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PerformanceState:
        return cls(
            state_id=d["state_id"],
            display_name=d["display_name"],
            primary_bottleneck=d["primary_bottleneck"],
            secondary_bottleneck=d["secondary_bottleneck"],
            description=d["description"],
            optimizations=[OptimizationEntry.from_dict(o) for o in d["optimizations"]],
        )


@dataclass
class KnowledgeBase:
    format_version: int = FORMAT_VERSION
    hardware_tag: str = ""
    states: list[PerformanceState] = field(default_factory=list)
    update_count: int = 0
    created_at: str = field(default_factory=now_rfc3339)
    updated_at: str = ""

    def __post_init__(self):
        if not self.updated_at:
            self.updated_at = self.created_at

    # -- queries -----------------------------------------------------------
    def state(self, state_id: str) -> PerformanceState:
        for s in self.states:
            if s.state_id == state_id:
                return s
        raise UnknownState(state_id)

    def has_state(self, state_id: str) -> bool:
        return any(s.state_id == state_id for s in self.states)

    def entry(self, state_id: str, opt_id: str) -> OptimizationEntry:
        e = self.state(state_id).get(opt_id)
        if e is None:
            raise UnknownOptimization(f"{state_id}/{opt_id}")
        return e

    def lookup_state(self, signature):
        """Known/Discovered classification of ``signature``; see ``state_engine.match_state``."""
        from .state_engine import match_state

        return match_state(self, signature)

    # -- mutations (append-only except score fields) -----------------------
    def _touch(self) -> None:
        self.updated_at = now_rfc3339()

    def add_state(self, state: PerformanceState, *, count_update: bool = True) -> str:
        if not state.state_id:
            state.state_id = slugify(state.display_name)
        if not state.state_id:
            raise SchemaViolation("state needs a state_id or a display_name")
        if self.has_state(state.state_id):
            raise DuplicateState(state.state_id)
        if not is_valid_label(state.primary_bottleneck):
            raise SchemaViolation(f"unknown bottleneck label {state.primary_bottleneck!r}")
        self.states.append(state)
        if count_update:
            self.update_count += 1
        self._touch()
        return state.state_id

    def add_optimization(self, state_id: str, entry: OptimizationEntry) -> str:
        state = self.state(state_id)
        if not entry.opt_id:
            entry.opt_id = slugify(entry.name)
        if not (entry.predicted_gain > 0 and math.isfinite(entry.predicted_gain)):
            raise SchemaViolation(f"predicted_gain must be > 0, got {entry.predicted_gain}")
        if state.get(entry.opt_id) is not None:
            raise DuplicateOptimization(f"{state_id}/{entry.opt_id}")
        state.optimizations.append(entry)
        self._touch()
        return entry.opt_id

    def update_score(
        self,
        state_id: str,
        opt_id: str,
        observed_gain: float,
        alpha: float = DEFAULT_ALPHA,
        iteration: int | None = None,
    ) -> float:
        """Exponential moving average of the predicted gain toward ``observed_gain``."""
        if not 0 < alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        if not observed_gain > 0:
            raise ValueError(f"observed_gain must be > 0, got {observed_gain}")
        e = self.entry(state_id, opt_id)
        g = e.predicted_gain
        updated = g + alpha * (observed_gain - g)
        if abs(updated - observed_gain) >= abs(g - observed_gain):
            updated = observed_gain  # rounding stalled within an ulp of the target
        e.predicted_gain = updated
        e.observation_count += 1
        if observed_gain > SUCCESS_THRESHOLD:
            e.success_count += 1
        if iteration is not None:
            e.last_updated_iteration = iteration
        self._touch()
        return e.predicted_gain

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": self.format_version,
            "hardware_tag": self.hardware_tag,
            "update_count": self.update_count,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "states": [s.to_dict() for s in self.states],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> KnowledgeBase:
        return cls(
            format_version=d["format_version"],
            hardware_tag=d["hardware_tag"],
            states=[PerformanceState.from_dict(s) for s in d["states"]],
            update_count=d["update_count"],
            created_at=d["created_at"],
            updated_at=d["updated_at"],
        )

    def copy(self) -> KnowledgeBase:
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# schema

_OPT_SCHEMA = {
    "type": "object",
    "required": [
        "opt_id",
        "name",
        "description",
        "predicted_gain",
        "observation_count",
        "success_count",
        "last_updated_iteration",
    ],
    "additionalProperties": False,
    "properties": {
        "opt_id": {"type": "string", "minLength": 1},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "predicted_gain": {"type": "number", "exclusiveMinimum": 0},
        "observation_count": {"type": "integer", "minimum": 0},
        "success_count": {"type": "integer", "minimum": 0},
        "last_updated_iteration": {"type": "integer"},
    },
}

_STATE_SCHEMA = {
    "type": "object",
    "required": [
        "state_id",
        "display_name",
        "primary_bottleneck",
        "secondary_bottleneck",
        "description",
        "optimizations",
    ],
    "additionalProperties": False,
    "properties": {
        "state_id": {"type": "string", "minLength": 1},
        "display_name": {"type": "string"},
        "primary_bottleneck": {"type": "string", "minLength": 1},
        "secondary_bottleneck": {"type": ["string", "null"]},
        "description": {"type": "string"},
        "optimizations": {"type": "array", "items": _OPT_SCHEMA},
    },
}

KB_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["format_version", "hardware_tag", "update_count", "created_at", "updated_at", "states"],
    "additionalProperties": False,
    "properties": {
        "format_version": {"type": "integer"},
        "hardware_tag": {"type": "string"},
        "update_count": {"type": "integer", "minimum": 0},
        "created_at": {"type": "string"},
        "updated_at": {"type": "string"},
        "states": {"type": "array", "items": _STATE_SCHEMA},
    },
}

_validator = jsonschema.Draft7Validator(KB_SCHEMA)


def _locus(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def validate_document(doc: Any) -> None:
    """Raise MalformedFile (with a field locus) unless ``doc`` is a valid KB document."""
    errors = sorted(_validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise MalformedFile(err.message, locus=_locus(err.absolute_path))
    if doc["format_version"] != FORMAT_VERSION:
        raise VersionUnsupported(f"format_version {doc['format_version']} (supported: {FORMAT_VERSION})")
    seen: set[str] = set()
    for i, s in enumerate(doc["states"]):
        if s["state_id"] in seen:
            raise MalformedFile(f"duplicate state_id {s['state_id']!r}", locus=f"states[{i}].state_id")
        seen.add(s["state_id"])
        if not is_valid_label(s["primary_bottleneck"]):
            raise MalformedFile(
                f"unknown bottleneck label {s['primary_bottleneck']!r}", locus=f"states[{i}].primary_bottleneck"
            )
        sec = s["secondary_bottleneck"]
        if sec is not None and (not is_valid_label(sec) or sec == s["primary_bottleneck"]):
            raise MalformedFile(f"bad secondary bottleneck {sec!r}", locus=f"states[{i}].secondary_bottleneck")
        opt_ids: set[str] = set()
        for j, o in enumerate(s["optimizations"]):
            where = f"states[{i}].optimizations[{j}]"
            if o["opt_id"] in opt_ids:
                raise MalformedFile(f"duplicate opt_id {o['opt_id']!r}", locus=where + ".opt_id")
            opt_ids.add(o["opt_id"])
            if o["success_count"] > o["observation_count"]:
                raise MalformedFile("success_count exceeds observation_count", locus=where + ".success_count")


def validate(kb: KnowledgeBase) -> None:
    """Raise SchemaViolation unless the in-memory KB satisfies the file schema."""
    try:
        validate_document(json.loads(dumps(kb)))
    except (MalformedFile, VersionUnsupported) as exc:
        raise SchemaViolation(str(exc)) from exc


# ---------------------------------------------------------------------------
# canonical JSON


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise SchemaViolation(f"non-finite float {x!r}")
    return f"{x:.6g}"


def _encode(value: Any, indent: int) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(k, ensure_ascii=False)}: {_encode(value[k], indent + 1)}" for k in sorted(value)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in value) + "\n" + end + "]"
    if isinstance(value, float):
        return _fmt_float(value)
    return json.dumps(value, ensure_ascii=False)


def canonical_json(value: Any) -> str:
    """Sorted-key, 2-space JSON with every float printed at 6 significant digits."""
    return _encode(value, 0) + "\n"


def dumps(kb: KnowledgeBase) -> str:
    return canonical_json(kb.to_dict())


def serialized_size(kb: KnowledgeBase) -> int:
    return len(dumps(kb).encode("utf-8"))


def loads(text: str) -> KnowledgeBase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(exc.msg, locus=f"line {exc.lineno} column {exc.colno}") from exc
    validate_document(doc)
    return KnowledgeBase.from_dict(doc)


def load(path: str | Path) -> KnowledgeBase:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFile("not UTF-8", locus=str(path)) from exc
    return loads(text)


def save(kb: KnowledgeBase, path: str | Path, *, size_cap: int = SOFT_SIZE_CAP) -> int:
    """Write ``kb`` canonically; returns the byte size.  Oversized files still get written."""
    data = dumps(kb).encode("utf-8")
    Path(path).write_bytes(data)
    if len(data) > size_cap:
        msg = f"knowledge base is {len(data)} bytes, above the soft cap of {size_cap}"
        logger.warning(msg)
        warnings.warn(msg, KBSizeWarning, stacklevel=2)
    return len(data)


# ---------------------------------------------------------------------------
# merge


def merge(a: KnowledgeBase, b: KnowledgeBase) -> KnowledgeBase:
    """Union two knowledge bases by state_id.

    Colliding optimization entries get the observation-weighted mean gain and
    summed counts; the gain values do not depend on argument order.
    """
    if a.format_version != b.format_version:
        raise VersionMismatch(f"{a.format_version} != {b.format_version}")
    out = a.copy()
    for sb in b.states:
        if not out.has_state(sb.state_id):
            out.states.append(copy.deepcopy(sb))
            continue
        sa = out.state(sb.state_id)
        for ob in sb.optimizations:
            oa = sa.get(ob.opt_id)
            if oa is None:
                sa.optimizations.append(copy.deepcopy(ob))
                continue
            n = oa.observation_count + ob.observation_count
            if oa.predicted_gain == ob.predicted_gain:
                gain = oa.predicted_gain
            elif n:
                gain = (oa.predicted_gain * oa.observation_count + ob.predicted_gain * ob.observation_count) / n
            else:
                gain = (oa.predicted_gain + ob.predicted_gain) / 2.0
            oa.predicted_gain = gain
            oa.observation_count = n
            oa.success_count += ob.success_count
            oa.last_updated_iteration = max(oa.last_updated_iteration, ob.last_updated_iteration)

    tags = sorted({t for t in a.hardware_tag.split("+") + b.hardware_tag.split("+") if t})
    out.hardware_tag = "+".join(tags)
    out.update_count = a.update_count + b.update_count
    # timestamps from state-less inputs carry no history, so merge(kb, empty) == kb
    dated = [kb for kb in (a, b) if kb.states] or [a]
    out.created_at = min(kb.created_at for kb in dated)
    out.updated_at = max(kb.updated_at for kb in dated)
    return out
