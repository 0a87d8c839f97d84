"""Agent requests/responses, prompt templates and structured-response parsing."""

from __future__ import annotations

import enum
import json
import logging
import re
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any

import jsonschema

from ..errors import MissingPlaceholder, ParseFailure

logger = logging.getLogger(__name__)


class Role(str, enum.Enum):
    STATE_EXTRACTOR = "state_extractor"
    OPTIMIZATION_PROPOSER = "optimization_proposer"
    LOWERING = "lowering"
    POLICY_EVALUATION_SUMMARIZER = "policy_evaluation_summarizer"
    PERF_GAP_ANALYSIS = "perf_gap_analysis"
    PARAMETER_UPDATE_REWRITER = "parameter_update_rewriter"
    SOFT_VERIFIER = "soft_verifier"


@dataclass(frozen=True)
class AgentRequest:
    role_id: Role
    rendered_prompt: str
    response_schema_id: str
    temperature: float = 0.0
    max_tokens: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "role_id", Role(self.role_id))
        if not self.rendered_prompt:
            raise ValueError("rendered_prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class AgentResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: int = 0
    role_id: str = ""

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


# ---------------------------------------------------------------------------
# templates

_PLACEHOLDER = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


@lru_cache(maxsize=None)
def load_template(role_id: str) -> str:
    return resources.files(__package__).joinpath("templates", f"{Role(role_id).value}.txt").read_text("utf-8")


def template_placeholders(role_id: str) -> list[str]:
    return sorted(set(_PLACEHOLDER.findall(load_template(role_id))))


def render_prompt(role_id: str | Role, context: dict[str, str]) -> str:
    """Substitute ``${name}`` placeholders; values are inserted verbatim."""
    role = Role(role_id)
    for name in template_placeholders(role.value):
        if name not in context:
            raise MissingPlaceholder(name)
    return string.Template(load_template(role.value)).substitute({k: str(v) for k, v in context.items()})


# ---------------------------------------------------------------------------
# structured parsing

_FENCE = re.compile(r"```([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)

_GAIN = {"type": "number", "exclusiveMinimum": 0}

ITEM_SCHEMAS: dict[str, dict] = {
    "proposal": {
        "type": "object",
        "required": ["name", "predicted_gain"],
        "properties": {
            "name": {"type": "string", "minLength": 1},
            "description": {"type": "string"},
            "predicted_gain": _GAIN,
        },
    },
    "new_optimization": {
        "type": "object",
        "required": ["state_id", "name", "predicted_gain"],
        "properties": {
            "state_id": {"type": "string", "minLength": 1},
            "name": {"type": "string", "minLength": 1},
            "description": {"type": "string"},
            "predicted_gain": _GAIN,
        },
    },
    "new_state": {
        "type": "object",
        "required": ["primary_bottleneck"],
        "properties": {
            "state_id": {"type": "string"},
            "display_name": {"type": "string"},
            "primary_bottleneck": {"type": "string", "minLength": 1},
            "secondary_bottleneck": {"type": ["string", "null"]},
            "description": {"type": "string"},
        },
    },
}

DOCUMENT_SCHEMAS: dict[str, dict] = {
    "signature": {
        "type": "object",
        "anyOf": [{"required": ["primary"]}, {"required": ["primary_bottleneck"]}],
    },
    "gap_rationale": {"type": "object", "required": ["summary"], "properties": {"summary": {"type": "string"}}},
    "analysis_report": {
        "type": "object",
        "required": ["rationale"],
        "properties": {
            "rationale": {"type": "string"},
            "new_states": {"type": "array"},
            "new_optimizations": {"type": "array"},
        },
    },
    "soft_verdict": {
        "type": "object",
        "required": ["verdict"],
        "properties": {
            "verdict": {"enum": ["accept", "reject"]},
            "reason": {"enum": ["functionality_removed", "external_library", "other", None]},
            "detail": {"type": "string"},
        },
    },
    "rewrite": {"type": "object", "required": ["description"], "properties": {"description": {"type": "string"}}},
}

SCHEMA_IDS = ("code", "proposals", *DOCUMENT_SCHEMAS)


def _is_valid(instance: Any, schema: dict) -> bool:
    return jsonschema.Draft7Validator(schema).is_valid(instance)


def filter_items(items: list, item_schema: str, *, context: str = "") -> list[dict]:
    """Keep schema-valid items; each dropped item is logged as an event."""
    schema = ITEM_SCHEMAS[item_schema]
    kept = []
    for i, item in enumerate(items):
        if _is_valid(item, schema):
            kept.append(item)
        else:
            logger.warning("dropped invalid %s item %d%s: %r", item_schema, i, context, item)
    return kept


def _json_documents(text: str):
    """Yield JSON documents: fenced blocks first, then bare objects/arrays in the prose."""
    for _, body in _FENCE.findall(text):
        try:
            yield json.loads(body)
        except json.JSONDecodeError:
            continue
    decoder = json.JSONDecoder()
    for m in re.finditer(r"[\[{]", text):
        try:
            doc, _ = decoder.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        yield doc


def parse_structured(text: str, schema_id: str) -> Any:
    """Extract the first document in ``text`` matching ``schema_id``.

    ``code`` returns the first fenced block's contents.  ``proposals`` returns the
    schema-valid proposal items (invalid ones dropped with a logged event).
    Raises ParseFailure when nothing usable is found.
    """
    if schema_id not in SCHEMA_IDS:
        raise KeyError(f"unregistered schema {schema_id!r}")
    if schema_id == "code":
        m = _FENCE.search(text)
        if not m:
            raise ParseFailure("no fenced code block in response")
        return m.group(2)
    if schema_id == "proposals":
        for doc in _json_documents(text):
            if isinstance(doc, dict) and isinstance(doc.get("optimizations"), list):
                doc = doc["optimizations"]
            if isinstance(doc, list):
                return filter_items(doc, "proposal")
        raise ParseFailure("no proposal list in response")
    schema = DOCUMENT_SCHEMAS[schema_id]
    for doc in _json_documents(text):
        if _is_valid(doc, schema):
            return doc
    raise ParseFailure(f"no document matching {schema_id!r} in response")
