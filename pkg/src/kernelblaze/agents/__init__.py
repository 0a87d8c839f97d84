"""Agent abstraction: prompts, structured parsing, live and deterministic agents."""

from .core import (
    AgentRequest,
    AgentResponse,
    Role,
    SCHEMA_IDS,
    filter_items,
    load_template,
    parse_structured,
    render_prompt,
    template_placeholders,
)
from .live import LiveAgent
from .mock import MockAgent, SimAgent, count_tokens

__all__ = [
    "AgentRequest",
    "AgentResponse",
    "LiveAgent",
    "MockAgent",
    "Role",
    "SCHEMA_IDS",
    "SimAgent",
    "count_tokens",
    "filter_items",
    "load_template",
    "parse_structured",
    "render_prompt",
    "template_placeholders",
]
