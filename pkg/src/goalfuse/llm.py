"""Two-stage LLM target-object elicitation, action prediction and judging.

Stage 1 asks for a free-form list of candidate target objects and actions,
stage 2 grades every scene object A/B/C/D, and the grades map to scores
15/10/5/1 which normalize into a probability map. A separate prompt predicts
the action at a chosen target, and a judge prompt scores a predicted action
against ground truth as 0/1.

The wire protocol is an OpenAI-compatible ``POST {base_url}/chat/completions``.
Two offline backends make the whole pipeline deterministic without network:
a scripted one (prompt-hash -> canned response) and a heuristic one that
grades objects by whether the prompt's context sections mention them.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Protocol

import requests

from .errors import (
    ContractError,
    ProtocolError,
    RequestError,
    TransportError,
    ValidationError,
)
from .fusion import ObjectProbabilityMap, Telemetry, normalized

UNAVAILABLE = "[unavailable]"
API_KEY_ENV = "TRLLM_API_KEY"

DEFAULT_RANK_SCORES: dict[str, float] = {"A": 15.0, "B": 10.0, "C": 5.0, "D": 1.0}

# patched by tests to avoid real backoff sleeps
_sleep = time.sleep


class AblationMode(str, Enum):
    """Context-degradation conditions for robustness evaluation."""

    ALL = "all"
    WO_CONV = "wo_conv"
    WO_CONV_HIST = "wo_conv_hist"

    @property
    def drops_conversation(self) -> bool:
        return self is not AblationMode.ALL

    @property
    def drops_history(self) -> bool:
        return self is AblationMode.WO_CONV_HIST


@dataclass(frozen=True)
class SceneContext:
    """Textual scene state handed to the language model."""

    day_time: str
    persona: str
    location: str
    action_history: tuple[str, ...]
    conversation: tuple[str, ...]
    object_list: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "action_history", tuple(self.action_history))
        object.__setattr__(self, "conversation", tuple(self.conversation))
        object.__setattr__(self, "object_list", tuple(self.object_list))
        if not self.object_list:
            raise ValidationError("object_list must be non-empty")
        if len(set(self.object_list)) != len(self.object_list):
            raise ValidationError("object_list must be duplicate-free")


@dataclass(frozen=True)
class RankAssignment:
    """A/B/C/D grade per label; ``defaulted`` lists labels that fell to D."""

    ranks: dict[str, str]
    defaulted: tuple[str, ...] = ()


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str
    model_name: str
    api_key: str | None = None
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 3

    def __post_init__(self):
        if not (self.timeout > 0):
            raise ValidationError(f"timeout must be positive, got {self.timeout}")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")


# ---------------------------------------------------------------------------
# prompt construction


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (resources.files("goalfuse") / "templates" / f"{name}.txt").read_text(
        encoding="utf-8"
    )


def _lines_or_marker(items: tuple[str, ...], dropped: bool) -> str:
    if dropped:
        return UNAVAILABLE
    if not items:
        return "(none)"
    return "\n".join(f"- {item}" for item in items)


def _context_fields(ctx: SceneContext, mode: AblationMode) -> dict[str, str]:
    return {
        "day_time": ctx.day_time,
        "persona": ctx.persona,
        "location": ctx.location,
        "action_history": _lines_or_marker(ctx.action_history, mode.drops_history),
        "conversation": _lines_or_marker(ctx.conversation, mode.drops_conversation),
        "objects": "\n".join(f"- {label}" for label in ctx.object_list),
    }


def build_candidate_prompt(ctx: SceneContext, mode: AblationMode) -> str:
    """Stage-1 prompt: free-form candidate objects and their actions."""
    return _template("candidate").format(**_context_fields(ctx, mode))


def build_ranking_prompt(ctx: SceneContext, mode: AblationMode, candidates: str) -> str:
    """Stage-2 prompt: grade every object A/B/C/D given stage-1 output."""
    fields = _context_fields(ctx, mode)
    fields["candidates"] = candidates.strip() or "(none)"
    return _template("ranking").format(**fields)


def build_action_prompt(ctx: SceneContext, mode: AblationMode, target_object: str) -> str:
    fields = _context_fields(ctx, mode)
    fields["target_object"] = target_object
    return _template("action").format(**fields)


def build_judge_prompt(predicted: str, ground_truth: str) -> str:
    return _template("judge").format(predicted=predicted, ground_truth=ground_truth)


# ---------------------------------------------------------------------------
# response parsing and scoring


def _canon(text: str) -> str:
    return " ".join(text.split()).lower()


def parse_ranks(
    response: str,
    objects: list[str] | tuple[str, ...],
    telemetry: Telemetry | None = None,
) -> RankAssignment:
    """Total parser for ``label: GRADE`` lines.

    Case-insensitive and whitespace-tolerant; labels missing from the
    response (or graded outside A-D) default to D; duplicates: last wins.
    """
    by_canon = {_canon(label): label for label in objects}
    assigned: dict[str, str | None] = {}
    for line in response.splitlines():
        if ":" not in line:
            continue
        label_part, _, rank_part = line.rpartition(":")
        label = by_canon.get(_canon(label_part))
        if label is None:
            continue
        letter = rank_part.strip().rstrip(".").upper()
        assigned[label] = letter if letter in ("A", "B", "C", "D") else None
    ranks: dict[str, str] = {}
    defaulted: list[str] = []
    for label in objects:
        letter = assigned.get(label)
        if letter is None:
            defaulted.append(label)
            letter = "D"
        ranks[label] = letter
    if defaulted and telemetry is not None:
        telemetry.flag("rank_defaulted", len(defaulted))
    return RankAssignment(ranks=ranks, defaulted=tuple(defaulted))


def ranks_to_probabilities(
    ranks: RankAssignment | Mapping[str, str],
    scores: Mapping[str, float] = DEFAULT_RANK_SCORES,
) -> ObjectProbabilityMap:
    """Map grades to scores (default A/B/C/D -> 15/10/5/1) and normalize."""
    mapping = ranks.ranks if isinstance(ranks, RankAssignment) else ranks
    if not mapping:
        raise ContractError("rank assignment is empty")
    unknown = {r for r in mapping.values() if r not in scores}
    if unknown:
        raise ContractError(f"unknown ranks {sorted(unknown)}")
    return normalized({label: scores[r] for label, r in mapping.items()})


# ---------------------------------------------------------------------------
# backends


class LlmClient(Protocol):
    def complete(self, prompt: str) -> str: ...

    def describe(self) -> str: ...


def script_key(prompt: str) -> str:
    """Stable 16-hex-digit key of a prompt, for response-script files."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


class ScriptedLlmClient:
    """Replays canned responses keyed by prompt hash from a JSON script."""

    def __init__(self, script: Mapping[str, str] | str | Path):
        if isinstance(script, (str, Path)):
            script = json.loads(Path(script).read_text(encoding="utf-8"))
        if not isinstance(script, Mapping):
            raise ValidationError("response script must be a JSON object")
        self._responses = dict(script)

    def complete(self, prompt: str) -> str:
        key = script_key(prompt)
        try:
            return self._responses[key]
        except KeyError:
            raise ContractError(
                f"response script has no entry for prompt hash {key}"
            ) from None

    def describe(self) -> str:
        return "scripted-mock"


_WORD_RE_CACHE: dict[str, re.Pattern] = {}


def _mentions(label: str, text: str) -> bool:
    pat = _WORD_RE_CACHE.get(label)
    if pat is None:
        pat = re.compile(r"\b" + re.escape(label.lower()) + r"\b")
        _WORD_RE_CACHE[label] = pat
    return pat.search(text.lower()) is not None


def _section(prompt: str, start: str, *ends: str) -> str:
    i = prompt.find(start)
    if i < 0:
        return ""
    i += len(start)
    j = len(prompt)
    for end in ends:
        k = prompt.find(end, i)
        if 0 <= k < j:
            j = k
    return prompt[i:j]


def _listed_labels(prompt: str, header: str) -> list[str]:
    block = _section(prompt, header, "\n##")
    return [
        line[2:].strip()
        for line in block.splitlines()
        if line.startswith("- ")
    ]


class HeuristicLlmClient:
    """Deterministic offline stand-in for a live model.

    Grades A for objects mentioned in the action history or conversation
    sections of the prompt, B for objects mentioned in the current-location
    line, else D. Ablated sections carry no mentions, so grades degrade with
    the available context exactly like a real model would.
    """

    def complete(self, prompt: str) -> str:
        if "## Objects to grade" in prompt:
            return self._rank(prompt)
        if "## Objects in the room" in prompt:
            return self._candidates(prompt)
        if "## Situation" in prompt:
            return self._action(prompt)
        if "Predicted action:" in prompt:
            return self._judge(prompt)
        raise ContractError("heuristic backend cannot classify this prompt")

    def describe(self) -> str:
        return "heuristic-mock"

    def _grades(self, prompt: str, labels: list[str]) -> dict[str, str]:
        history = _section(prompt, "Recent action history:", "Recent conversation:")
        conversation = _section(prompt, "Recent conversation:", "\n##")
        location = _section(prompt, "Current location:", "\n")
        grades = {}
        for label in labels:
            if _mentions(label, history) or _mentions(label, conversation):
                grades[label] = "A"
            elif _mentions(label, location):
                grades[label] = "B"
            else:
                grades[label] = "D"
        return grades

    def _candidates(self, prompt: str) -> str:
        labels = _listed_labels(prompt, "## Objects in the room")
        grades = self._grades(prompt, labels)
        lines = [
            f"{label}: go to the {label} and use it"
            for label in labels
            if grades[label] in ("A", "B")
        ]
        return "\n".join(lines) if lines else "no strong candidates"

    def _rank(self, prompt: str) -> str:
        labels = _listed_labels(prompt, "## Objects to grade")
        grades = self._grades(prompt, labels)
        return "\n".join(f"{label}: {grades[label]}" for label in labels)

    def _action(self, prompt: str) -> str:
        m = re.search(r"The person is heading for the (.+)\.", prompt)
        target = m.group(1) if m else "object"
        return f"use the {target}"

    _STOPWORDS = frozenset(
        "a an and at for in it of on the their to use with".split()
    )

    def _judge(self, prompt: str) -> str:
        predicted = _section(prompt, "Predicted action:", "\n").strip()
        truth = _section(prompt, "Ground truth action:", "\n").strip()
        pred_tokens = set(re.findall(r"[a-z0-9]+", predicted.lower())) - self._STOPWORDS
        true_tokens = set(re.findall(r"[a-z0-9]+", truth.lower())) - self._STOPWORDS
        return "1" if pred_tokens & true_tokens else "0"


class HttpLlmClient:
    """OpenAI-compatible chat-completions client with bounded parallelism."""

    def __init__(self, config: LlmEndpointConfig, parallelism: int = 4):
        self.config = config
        self._session = requests.Session()
        self._slots = threading.Semaphore(parallelism)

    def complete(self, prompt: str) -> str:
        with self._slots:
            return chat_complete(self.config, prompt, session=self._session)

    def describe(self) -> str:
        return f"http({self.config.model_name})"


def request_json(
    cfg: LlmEndpointConfig,
    path: str,
    body: dict,
    session: requests.Session | None = None,
) -> dict:
    """POST JSON with exponential-backoff retries and return the parsed body.

    Retries transport errors and HTTP 429/5xx (base 1 s, factor 2, up to
    ``max_retries``); other 4xx raise immediately; non-JSON bodies raise a
    protocol error without retrying.
    """
    url = cfg.base_url.rstrip("/") + path
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV) or cfg.api_key
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    post = session.post if session is not None else requests.post

    last_failure = None
    for attempt in range(cfg.max_retries + 1):
        try:
            resp = post(url, json=body, headers=headers, timeout=cfg.timeout)
        except requests.RequestException as exc:
            last_failure = f"transport: {exc}"
        else:
            if resp.status_code == 429 or resp.status_code >= 500:
                last_failure = f"HTTP {resp.status_code}"
            elif resp.status_code >= 400:
                raise RequestError(f"{url} answered HTTP {resp.status_code}")
            else:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProtocolError(
                        f"endpoint returned non-JSON body: {exc}"
                    ) from exc
        if attempt < cfg.max_retries:
            _sleep(1.0 * 2**attempt)
    raise TransportError(
        f"{url} failed after {cfg.max_retries} retries ({last_failure})"
    )


def chat_complete(
    cfg: LlmEndpointConfig,
    prompt: str,
    session: requests.Session | None = None,
) -> str:
    """Single-user-message chat completion over the OpenAI-compatible wire."""
    body = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    }
    doc = request_json(cfg, "/chat/completions", body, session=session)
    try:
        content = doc["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ProtocolError("response lacks choices[0].message.content") from None
    if not isinstance(content, str):
        raise ProtocolError("message content is not text")
    return content


# ---------------------------------------------------------------------------
# pipeline operations


def predict_target_ranks(
    client: LlmClient,
    ctx: SceneContext,
    mode: AblationMode,
    telemetry: Telemetry | None = None,
) -> ObjectProbabilityMap:
    """Full two-stage elicitation: candidates, then grading, then scores."""
    candidates = client.complete(build_candidate_prompt(ctx, mode))
    graded = client.complete(build_ranking_prompt(ctx, mode, candidates))
    ranks = parse_ranks(graded, ctx.object_list, telemetry)
    return ranks_to_probabilities(ranks)


def predict_action(
    client: LlmClient,
    ctx: SceneContext,
    mode: AblationMode,
    target_object: str,
) -> str:
    """One-sentence action prediction for a chosen target object."""
    if target_object not in ctx.object_list:
        raise ContractError(f"target {target_object!r} is not a scene object")
    return client.complete(build_action_prompt(ctx, mode, target_object)).strip()


_BINARY_TOKEN_RE = re.compile(r"(?<![\d.])([01])(?![\d.])")


def judge_action(
    client: LlmClient,
    predicted: str,
    ground_truth: str,
    telemetry: Telemetry | None = None,
) -> int:
    """LLM judge: 1 when the prediction matches the ground-truth activity.

    The first standalone 0/1 token in the response wins; unparsable
    responses count as 0 and raise a telemetry flag.
    """
    if not predicted or not ground_truth:
        raise ContractError("judge_action needs non-empty texts")
    response = client.complete(build_judge_prompt(predicted, ground_truth))
    m = _BINARY_TOKEN_RE.search(response)
    if m is None:
        if telemetry is not None:
            telemetry.flag("judge_unparsable")
        return 0
    return int(m.group(1))
