"""Chat-completion clients: an HTTP client and a deterministic mock.

The wire contract is a POST of {"messages": [...], "max_new_tokens": n,
"temperature": t} answered by {"text": "...", "finish_reason": "..."},
which matches prevailing chat-completion services behind a thin proxy.
The mock client answers from a pattern table and, by default, follows
the strongest compatibility evidence it can find in the prompt — so
offline runs exercise the full prompt/parse/fallback machinery.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import requests

from .errors import ClientTimeout

CHAT_URL_VAR = "MATPROC_CHAT_URL"
CHAT_TOKEN_VAR = "MATPROC_CHAT_TOKEN"

_EVIDENCE_LINE = re.compile(r"^([A-H])\) .*\[compatibility (\d+\.\d{3})\]\s*$", re.MULTILINE)
_ANSWER_INSTRUCTION = "Respond with a single option letter"
_PLAN_INSTRUCTION = "Write a brief plan"


@dataclass
class ChatExchange:
    """One request/response pair, replayable from its serialized form."""

    messages: list[dict]
    max_new_tokens: int
    temperature: float = 0.0
    response_text: str = ""
    finish_reason: str = ""

    def to_dict(self) -> dict:
        return {
            "messages": [dict(m) for m in self.messages],
            "max_new_tokens": self.max_new_tokens,
            "temperature": self.temperature,
            "response_text": self.response_text,
            "finish_reason": self.finish_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChatExchange":
        return cls(
            messages=[dict(m) for m in d["messages"]],
            max_new_tokens=int(d["max_new_tokens"]),
            temperature=float(d.get("temperature", 0.0)),
            response_text=d.get("response_text", ""),
            finish_reason=d.get("finish_reason", ""),
        )


class HttpChatClient:
    def __init__(self, url: str, token: str | None = None, timeout: float = 60.0, retries: int = 2):
        self.url = url
        self.token = token
        self.timeout = timeout
        self.retries = retries

    def complete(self, messages: list[dict], max_new_tokens: int, temperature: float = 0.0) -> ChatExchange:
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        payload = {
            "messages": messages,
            "max_new_tokens": max_new_tokens,
            "temperature": temperature,
        }
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = requests.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout
                )
                response.raise_for_status()
                body = response.json()
                return ChatExchange(
                    messages=messages,
                    max_new_tokens=max_new_tokens,
                    temperature=temperature,
                    response_text=body["text"],
                    finish_reason=body.get("finish_reason", "stop"),
                )
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        raise ClientTimeout(f"chat endpoint failed after {self.retries + 1} attempts: {last_error}")


@dataclass
class MockChatClient:
    """Deterministic stand-in: pattern rules first, then evidence-following.

    ``rules`` maps regex patterns to canned responses, matched against the
    concatenated prompt text in order. Without a matching rule the mock
    answers: a fixed plan sentence for plan prompts, the option letter with
    the highest rendered compatibility score for answer prompts that carry
    evidence lines, and "Answer: A" otherwise.
    """

    rules: list[tuple[str, str]] = field(default_factory=list)
    follow_evidence: bool = True
    calls: int = 0

    def complete(self, messages: list[dict], max_new_tokens: int, temperature: float = 0.0) -> ChatExchange:
        self.calls += 1
        prompt = "\n".join(m["content"] for m in messages)
        text = self._respond(prompt)
        return ChatExchange(
            messages=messages,
            max_new_tokens=max_new_tokens,
            temperature=temperature,
            response_text=text,
            finish_reason="stop",
        )

    def _respond(self, prompt: str) -> str:
        for pattern, response in self.rules:
            if re.search(pattern, prompt, re.MULTILINE):
                return response
        if _PLAN_INSTRUCTION in prompt:
            return (
                "Compare each option against the retrieved precedent routes, "
                "their conditions and tools, then prefer the option with the "
                "strongest compatibility evidence."
            )
        if self.follow_evidence and _ANSWER_INSTRUCTION in prompt:
            best_letter, best_score = None, -1.0
            for letter, rendered in _EVIDENCE_LINE.findall(prompt):
                score = float(rendered)
                if score > best_score:
                    best_letter, best_score = letter, score
            if best_letter is not None:
                return f"Answer: {best_letter}"
        return "Answer: A"


def get_chat_client(url: str | None = None, token: str | None = None):
    """HTTP client when an endpoint is configured, the mock otherwise."""
    url = url if url is not None else os.environ.get(CHAT_URL_VAR, "")
    token = token if token is not None else os.environ.get(CHAT_TOKEN_VAR) or None
    return HttpChatClient(url, token) if url else MockChatClient()
