"""Planner-parameter selection from memory, optionally through a language model."""
from .decide import (
    TOKEN_ENV,
    URL_ENV,
    Decision,
    DecisionSource,
    LlmClientConfig,
    MemoryReasoner,
    decide_llm,
    decide_prototype,
    describe,
    parse_decision,
)
from .mock import MockLlmServer
from .prompt import MAX_PROMPT_CHARS, ScenePrompt, curvature_class, motion_description, render_prompt
