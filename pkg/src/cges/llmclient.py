"""Chat-completions endpoint client, answer extraction, and JSONL record store.

Live sampling issues one generation request per (question, round) with token
log-probabilities enabled, extracts the answer label, computes the
probability-based confidences, and optionally appends the record to an
append-only JSONL store.  Replay mode serves stored records by
(question_id, round) and never touches the network, which makes whole runs
deterministic and byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Union

import requests

from .confidence import Estimator, TokenizedResponse, lns_arithmetic, lns_geometric
from .controller import Sampler
from .errors import (
    ConfigurationError,
    DuplicateRecordError,
    ReplayMissError,
    SamplerError,
)

logger = logging.getLogger(__name__)

INVALID_LABEL = "INVALID"

# exp() of very negative logprobs underflows to 0; keep token probs positive
MIN_TOKEN_PROB = 1e-300


class AnswerFormat(Enum):
    BOXED_MATH = "boxed_math"
    LETTER_CHOICE = "letter_choice"


MATH_INSTRUCTION = (
    "Solve the problem step by step. "
    "End with your final answer inside \\boxed{...}."
)
CHOICE_INSTRUCTION = (
    "Think step by step. "
    'End with a final line of the form "Answer: <letter>".'
)


def render_prompt(question_text: str, fmt: AnswerFormat) -> str:
    """Attach the answer-format instruction to the question text."""
    instruction = (
        MATH_INSTRUCTION if fmt is AnswerFormat.BOXED_MATH else CHOICE_INSTRUCTION
    )
    return f"{question_text.rstrip()}\n\n{instruction}"


_BOXED_OPEN = re.compile(r"\\boxed\s*\{")
_ANSWER_LETTER = re.compile(
    r"\banswer\s*(?:is)?\s*[:\-]?\s*\(?([A-Ja-j])\)?\b", re.IGNORECASE
)


def extract_answer(text: str, fmt: AnswerFormat) -> str:
    """Pull the final answer label out of a raw response.

    Boxed math takes the content of the last ``\\boxed{...}`` (brace-matched,
    whitespace-normalized); letter choice takes the last option letter after
    an "Answer" marker, uppercased.  Anything unparseable maps to the
    sentinel label ``INVALID``.
    """
    if fmt is AnswerFormat.BOXED_MATH:
        content = _last_boxed(text)
        if content is not None:
            normalized = " ".join(content.split())
            if normalized:
                return normalized
        return INVALID_LABEL
    matches = _ANSWER_LETTER.findall(text)
    if matches:
        return matches[-1].upper()
    return INVALID_LABEL


def _last_boxed(text: str) -> Optional[str]:
    openers = list(_BOXED_OPEN.finditer(text))
    for match in reversed(openers):
        start = match.end()
        depth = 1
        pos = start
        while pos < len(text) and depth > 0:
            if text[pos] == "{":
                depth += 1
            elif text[pos] == "}":
                depth -= 1
            pos += 1
        if depth == 0:
            return text[start : pos - 1]
    return None


# ---------------------------------------------------------------------------
# endpoint client
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EndpointConfig:
    """Connection and decoding settings for a chat-completions endpoint.

    The API key is looked up from the named environment variable at request
    time and never written anywhere.
    """

    base_url: str
    model_name: str
    temperature: float = 0.7
    top_p: float = 1.0
    max_tokens: int = 32_768
    request_timeout: float = 120.0
    max_parallel: int = 4
    max_retries: int = 3
    completions_path: str = "/v1/chat/completions"
    api_key_env: str = "CGES_API_KEY"

    def __post_init__(self) -> None:
        if self.temperature < 0.0:
            raise ConfigurationError(f"temperature must be >= 0, got {self.temperature!r}")
        if not 0.0 < self.top_p <= 1.0:
            raise ConfigurationError(f"top_p must lie in (0, 1], got {self.top_p!r}")
        if self.max_tokens < 1 or self.max_parallel < 1 or self.request_timeout <= 0:
            raise ConfigurationError("max_tokens, max_parallel, request_timeout must be positive")

    @classmethod
    def from_json_file(cls, path: Union[str, Path]) -> "EndpointConfig":
        with Path(path).open("r", encoding="utf-8") as handle:
            return cls(**json.load(handle))


@dataclass(frozen=True)
class SampleRecord:
    """One persisted sampling outcome for a (question, round) pair."""

    question_id: str
    round: int
    prompt: str
    raw_text: str
    extracted_label: str
    token_probs: Optional[tuple[float, ...]]
    step_importance: Optional[tuple[float, ...]]
    confidence_by_estimator: dict[str, float]
    seed: int
    timestamp: str

    def __post_init__(self) -> None:
        if not self.extracted_label:
            raise ValueError("extracted_label must be non-empty (use the INVALID sentinel)")
        if self.round < 1:
            raise ValueError(f"round must be >= 1, got {self.round!r}")

    def to_json_line(self) -> str:
        payload = {
            "question_id": self.question_id,
            "round": self.round,
            "prompt": self.prompt,
            "raw_text": self.raw_text,
            "extracted_label": self.extracted_label,
            "token_probs": list(self.token_probs) if self.token_probs is not None else None,
            "step_importance": (
                list(self.step_importance) if self.step_importance is not None else None
            ),
            "confidence_by_estimator": {
                key: self.confidence_by_estimator[key]
                for key in sorted(self.confidence_by_estimator)
            },
            "seed": self.seed,
            "timestamp": self.timestamp,
        }
        return json.dumps(payload, ensure_ascii=False)

    @classmethod
    def from_json_line(cls, line: str) -> "SampleRecord":
        raw = json.loads(line)
        return cls(
            question_id=raw["question_id"],
            round=raw["round"],
            prompt=raw.get("prompt", ""),
            raw_text=raw.get("raw_text", ""),
            extracted_label=raw["extracted_label"],
            token_probs=(
                tuple(raw["token_probs"]) if raw.get("token_probs") is not None else None
            ),
            step_importance=(
                tuple(raw["step_importance"])
                if raw.get("step_importance") is not None
                else None
            ),
            confidence_by_estimator=dict(raw.get("confidence_by_estimator", {})),
            seed=raw.get("seed", 0),
            timestamp=raw.get("timestamp", ""),
        )


class StoreMode(Enum):
    RECORD = "record"
    REPLAY = "replay"


class RecordStore:
    """Append-only JSONL store of sample records, indexed by (question, round).

    Record mode loads any existing file and appends new records (duplicates
    raise); replay mode requires the file to exist and refuses to sample.
    Appends are serialized; reads are safe from any thread once loaded.
    """

    def __init__(self, path: Union[str, Path], mode: StoreMode) -> None:
        self.path = Path(path)
        self.mode = mode
        self._lock = threading.Lock()
        self._index: dict[tuple[str, int], SampleRecord] = {}
        if mode is StoreMode.REPLAY and not self.path.exists():
            raise ConfigurationError(f"replay store {self.path} does not exist")
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as handle:
                for line_no, line in enumerate(handle, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    record = SampleRecord.from_json_line(line)
                    key = (record.question_id, record.round)
                    if key in self._index:
                        raise DuplicateRecordError(
                            f"{self.path}:{line_no}: duplicate record for {key!r}"
                        )
                    self._index[key] = record

    @classmethod
    def open_record(cls, path: Union[str, Path]) -> "RecordStore":
        return cls(path, StoreMode.RECORD)

    @classmethod
    def open_replay(cls, path: Union[str, Path]) -> "RecordStore":
        return cls(path, StoreMode.REPLAY)

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._index

    def get(self, question_id: str, round_idx: int) -> SampleRecord:
        try:
            return self._index[(question_id, round_idx)]
        except KeyError:
            raise ReplayMissError(
                f"no recorded sample for question {question_id!r} round {round_idx}"
            ) from None

    def append(self, record: SampleRecord) -> None:
        if self.mode is not StoreMode.RECORD:
            raise ConfigurationError("store is in replay mode; appends are not allowed")
        key = (record.question_id, record.round)
        with self._lock:
            if key in self._index:
                raise DuplicateRecordError(f"duplicate record for {key!r}")
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(record.to_json_line() + "\n")
            self._index[key] = record


def derive_seed(base_seed: int, question_id: str, round_idx: int) -> int:
    """Stable per-request seed from (base seed, question, round)."""
    digest = hashlib.sha256(f"{base_seed}:{question_id}:{round_idx}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def sample_once(
    question_id: str,
    prompt_text: str,
    fmt: AnswerFormat,
    round_idx: int,
    endpoint: EndpointConfig,
    seed: int,
    session: Optional[requests.Session] = None,
) -> SampleRecord:
    """Issue one generation request and package the outcome as a record.

    Token log-probabilities are requested; when the server omits them the
    record is degraded (no probability-based confidences) and a warning is
    logged.  HTTP failures are retried up to the configured bound, then raise.
    """
    prompt = render_prompt(prompt_text, fmt)
    url = endpoint.base_url.rstrip("/") + endpoint.completions_path
    payload = {
        "model": endpoint.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": endpoint.temperature,
        "top_p": endpoint.top_p,
        "max_tokens": endpoint.max_tokens,
        "logprobs": True,
        "seed": seed,
    }
    headers = {}
    api_key = os.environ.get(endpoint.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    poster = session if session is not None else requests
    body = None
    failure: Optional[Exception] = None
    for attempt in range(endpoint.max_retries + 1):
        try:
            response = poster.post(
                url, json=payload, headers=headers, timeout=endpoint.request_timeout
            )
            response.raise_for_status()
            body = response.json()
            break
        except (requests.RequestException, ValueError) as exc:
            failure = exc
            logger.warning(
                "request for question %r round %d failed (attempt %d/%d): %s",
                question_id,
                round_idx,
                attempt + 1,
                endpoint.max_retries + 1,
                exc,
            )
            if attempt < endpoint.max_retries:
                time.sleep(min(0.1 * 2**attempt, 2.0))
    if body is None:
        raise SamplerError(
            f"endpoint request for question {question_id!r} round {round_idx} "
            f"failed after {endpoint.max_retries + 1} attempts"
        ) from failure

    raw_text, logprobs = _parse_completion(body)
    token_probs: Optional[tuple[float, ...]] = None
    confidences: dict[str, float] = {}
    if logprobs:
        token_probs = tuple(
            min(max(math.exp(lp), MIN_TOKEN_PROB), 1.0) for lp in logprobs
        )
        tokenized = TokenizedResponse(token_probs=token_probs)
        confidences[Estimator.LNS_ARITHMETIC.value] = lns_arithmetic(tokenized)
        confidences[Estimator.LNS_GEOMETRIC.value] = lns_geometric(tokenized)
    else:
        logger.warning(
            "no token log-probabilities for question %r round %d; "
            "probability-based estimators will refuse this record",
            question_id,
            round_idx,
        )
    return SampleRecord(
        question_id=question_id,
        round=round_idx,
        prompt=prompt,
        raw_text=raw_text,
        extracted_label=extract_answer(raw_text, fmt),
        token_probs=token_probs,
        step_importance=None,
        confidence_by_estimator=confidences,
        seed=seed,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def _parse_completion(body: dict) -> tuple[str, Optional[list[float]]]:
    """Text and per-token logprobs from a chat- or legacy-completions payload."""
    try:
        choice = body["choices"][0]
    except (KeyError, IndexError) as exc:
        raise SamplerError(f"malformed completion payload: {body!r}") from exc
    if "message" in choice:
        text = choice["message"].get("content") or ""
    else:
        text = choice.get("text") or ""
    logprobs = None
    raw = choice.get("logprobs")
    if isinstance(raw, dict):
        if isinstance(raw.get("content"), list):
            logprobs = [
                entry["logprob"]
                for entry in raw["content"]
                if entry.get("logprob") is not None
            ]
        elif isinstance(raw.get("token_logprobs"), list):
            logprobs = [lp for lp in raw["token_logprobs"] if lp is not None]
    return text, logprobs or None


# ---------------------------------------------------------------------------
# sampler adapters for the controller
# ---------------------------------------------------------------------------


def _estimator_key(estimator: Union[Estimator, str]) -> str:
    return estimator.value if isinstance(estimator, Estimator) else str(estimator)


def _confidence_from_record(record: SampleRecord, key: str) -> float:
    try:
        return record.confidence_by_estimator[key]
    except KeyError:
        available = sorted(record.confidence_by_estimator) or ["none"]
        raise SamplerError(
            f"record for question {record.question_id!r} round {record.round} has no "
            f"{key!r} confidence (available: {', '.join(available)}); the record may "
            "be degraded (missing token log-probabilities)"
        ) from None


def replay_sampler(
    store: RecordStore, estimator: Union[Estimator, str] = Estimator.LNS_ARITHMETIC
) -> Sampler:
    """Sampler that serves stored records and never performs network access."""
    if store.mode is not StoreMode.REPLAY:
        raise ConfigurationError("replay_sampler needs a store opened in replay mode")
    key = _estimator_key(estimator)

    def sample(question_id: str, round_idx: int) -> tuple[str, float]:
        record = store.get(question_id, round_idx)
        return record.extracted_label, _confidence_from_record(record, key)

    return sample


def live_sampler(
    endpoint: EndpointConfig,
    prompts: Mapping[str, tuple[str, AnswerFormat]],
    estimator: Union[Estimator, str] = Estimator.LNS_ARITHMETIC,
    store: Optional[RecordStore] = None,
    base_seed: int = 0,
) -> Sampler:
    """Sampler that queries the endpoint, optionally recording every sample.

    With a store attached, a (question, round) pair that is already recorded
    is served from the store instead of re-queried, so repeated runs (e.g.
    several methods compared in one session) draw from a single shared stream.
    """
    if store is not None and store.mode is not StoreMode.RECORD:
        raise ConfigurationError("live_sampler can only record into a record-mode store")
    key = _estimator_key(estimator)
    local = threading.local()  # sessions are not thread-safe; one per worker

    def sample(question_id: str, round_idx: int) -> tuple[str, float]:
        if store is not None and (question_id, round_idx) in store:
            record = store.get(question_id, round_idx)
            return record.extracted_label, _confidence_from_record(record, key)
        prompt_text, fmt = prompts[question_id]
        if not hasattr(local, "session"):
            local.session = requests.Session()
        record = sample_once(
            question_id,
            prompt_text,
            fmt,
            round_idx,
            endpoint,
            seed=derive_seed(base_seed, question_id, round_idx),
            session=local.session,
        )
        if store is not None:
            store.append(record)
        return record.extracted_label, _confidence_from_record(record, key)

    return sample
