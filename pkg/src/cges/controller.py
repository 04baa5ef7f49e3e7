"""Adaptive sampling loop and fixed-budget baselines over a batch of questions.

Three methods share one sampler interface, a callable
``sampler(question_id, round) -> (label, confidence)``:

* ``cges_run``  - resample only questions whose top posterior mass is still
  below the threshold gamma, stopping early per question;
* ``sc_run``    - draw the full budget everywhere and take the majority label;
* ``esc_run``   - stop a question once a full window of consecutive samples
  agrees, majority vote over everything drawn.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

from .errors import ConfigurationError, ReplayMissError, SamplerError
from .posterior import CandidateSet, Label, PosteriorVector, Sample, score, top

logger = logging.getLogger(__name__)

Sampler = Callable[[str, int], tuple[Label, float]]


class Method(Enum):
    CGES = "cges"
    SC = "sc"
    ESC = "esc"


@dataclass(frozen=True)
class ControllerConfig:
    method: Method = Method.CGES
    gamma: float = 0.9
    budget: int = 16
    esc_window: int = 4
    fixed_k: Optional[int] = None  # None selects the observed+virtual policy
    max_retries: int = 3
    max_parallel: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if self.budget < 1:
            raise ConfigurationError(f"budget must be >= 1, got {self.budget!r}")
        if self.method is Method.ESC and not 1 <= self.esc_window <= self.budget:
            raise ConfigurationError(
                f"ESC window must lie in [1, budget], got window={self.esc_window} "
                f"budget={self.budget}"
            )
        if self.fixed_k is not None and self.fixed_k < 2:
            raise ConfigurationError(f"fixed K must be >= 2, got {self.fixed_k!r}")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.max_parallel < 1:
            raise ConfigurationError("max_parallel must be >= 1")


@dataclass
class QuestionState:
    """Mutable per-question bookkeeping owned by the controller."""

    question_id: str
    samples: list[Sample] = field(default_factory=list)
    candidates: Optional[CandidateSet] = None
    posterior: Optional[PosteriorVector] = None
    resolved: bool = False

    @property
    def calls(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class RunResult:
    predictions: dict[str, Label]
    avg_calls: float
    per_question_calls: dict[str, int]
    per_question_posterior: dict[str, PosteriorVector]
    # diagnostics: questions that exhausted the budget without reaching gamma
    unresolved: tuple[str, ...] = ()


def run(
    questions: Sequence[str], sampler: Sampler, config: ControllerConfig
) -> RunResult:
    """Dispatch to the configured method."""
    if config.method is Method.CGES:
        return cges_run(questions, sampler, config)
    if config.method is Method.SC:
        return sc_run(
            questions,
            sampler,
            config.budget,
            fixed_k=config.fixed_k,
            max_retries=config.max_retries,
            max_parallel=config.max_parallel,
        )
    return esc_run(
        questions,
        sampler,
        config.esc_window,
        config.budget,
        fixed_k=config.fixed_k,
        max_retries=config.max_retries,
        max_parallel=config.max_parallel,
    )


def cges_run(
    questions: Sequence[str], sampler: Sampler, config: ControllerConfig
) -> RunResult:
    """Threshold-stopped Bayesian aggregation under a per-question call budget.

    Round 1 samples every question once; each later round resamples exactly
    the questions whose top posterior mass is still below gamma.  Stopping is
    inclusive (mass >= gamma stops) and the comparison runs in log space so a
    threshold of 1.0 stays unreachable while any competing mass is positive.
    """
    if config.method is not Method.CGES:
        raise ConfigurationError(f"cges_run needs method=CGES, got {config.method}")
    states = _fresh_states(questions)
    qids = list(states)
    log_gamma = math.log(config.gamma)

    _sample_round(states, qids, 1, sampler, config)
    remaining = qids
    for round_idx in range(2, config.budget + 1):
        remaining = [
            qid
            for qid in remaining
            if states[qid].posterior.top_log_mass() < log_gamma
        ]
        if not remaining:
            break
        _sample_round(states, remaining, round_idx, sampler, config)

    for state in states.values():
        state.resolved = state.posterior.top_log_mass() >= log_gamma
    predictions = {qid: top(state.posterior)[0] for qid, state in states.items()}
    return _finalize(states, predictions)


def sc_run(
    questions: Sequence[str],
    sampler: Sampler,
    budget: int,
    *,
    fixed_k: Optional[int] = None,
    max_retries: int = 3,
    max_parallel: int = 1,
) -> RunResult:
    """Self-consistency: exactly ``budget`` samples per question, majority label.

    Confidences are ignored for the prediction; the posterior is still filled
    in for diagnostics.
    """
    config = ControllerConfig(
        method=Method.SC,
        budget=budget,
        fixed_k=fixed_k,
        max_retries=max_retries,
        max_parallel=max_parallel,
    )
    states = _fresh_states(questions)
    qids = list(states)
    for round_idx in range(1, budget + 1):
        _sample_round(states, qids, round_idx, sampler, config)
    for state in states.values():
        state.resolved = True
    predictions = {
        qid: majority_label([s.label for s in state.samples])
        for qid, state in states.items()
    }
    return _finalize(states, predictions)


def esc_run(
    questions: Sequence[str],
    sampler: Sampler,
    window: int,
    budget: int,
    *,
    fixed_k: Optional[int] = None,
    max_retries: int = 3,
    max_parallel: int = 1,
) -> RunResult:
    """Early-stopping self-consistency over non-overlapping agreement windows.

    A question stops as soon as the latest full window of ``window`` samples
    holds a single label; otherwise it runs to the budget (a trailing partial
    window never triggers a stop).  The prediction is the majority label over
    everything drawn.
    """
    config = ControllerConfig(
        method=Method.ESC,
        budget=budget,
        esc_window=window,
        fixed_k=fixed_k,
        max_retries=max_retries,
        max_parallel=max_parallel,
    )
    states = _fresh_states(questions)
    active = list(states)
    for round_idx in range(1, budget + 1):
        if not active:
            break
        _sample_round(states, active, round_idx, sampler, config)
        if round_idx % window == 0:
            still_active = []
            for qid in active:
                latest = states[qid].samples[-window:]
                if len({s.label for s in latest}) > 1:
                    still_active.append(qid)
                else:
                    states[qid].resolved = True
            active = still_active
    predictions = {
        qid: majority_label([s.label for s in state.samples])
        for qid, state in states.items()
    }
    return _finalize(states, predictions)


def majority_label(labels: Sequence[Label]) -> Label:
    """Most frequent label; ties break toward the earliest first-seen label."""
    if not labels:
        raise ConfigurationError("majority vote needs at least one label")
    counts: dict[Label, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    best = None
    best_count = 0
    for label, count in counts.items():  # insertion order = first-seen order
        if count > best_count:
            best, best_count = label, count
    return best


def _fresh_states(questions: Sequence[str]) -> dict[str, QuestionState]:
    qids = list(questions)
    if not qids:
        raise ConfigurationError("at least one question is required")
    if len(set(qids)) != len(qids):
        raise ConfigurationError("question ids must be unique")
    return {qid: QuestionState(question_id=qid) for qid in qids}


def _sample_round(
    states: dict[str, QuestionState],
    qids: Sequence[str],
    round_idx: int,
    sampler: Sampler,
    config: ControllerConfig,
) -> None:
    """Draw one sample for each listed question and rescore it.

    Distinct questions may sample concurrently up to ``max_parallel``; results
    are applied in question order, so outcomes do not depend on scheduling.
    """

    def draw(qid: str) -> tuple[Label, float]:
        failure: Optional[Exception] = None
        for attempt in range(config.max_retries + 1):
            try:
                return sampler(qid, round_idx)
            except (SamplerError, ReplayMissError):
                raise  # already definitive, retrying cannot help
            except Exception as exc:  # noqa: BLE001 - sampler callbacks are arbitrary
                failure = exc
                logger.warning(
                    "sampler failed for question %r round %d (attempt %d/%d): %s",
                    qid,
                    round_idx,
                    attempt + 1,
                    config.max_retries + 1,
                    exc,
                )
        raise SamplerError(
            f"sampling question {qid!r} round {round_idx} failed after "
            f"{config.max_retries + 1} attempts"
        ) from failure

    if config.max_parallel > 1 and len(qids) > 1:
        with ThreadPoolExecutor(max_workers=config.max_parallel) as pool:
            results = list(pool.map(draw, qids))
    else:
        results = [draw(qid) for qid in qids]

    for qid, (label, confidence) in zip(qids, results):
        state = states[qid]
        state.samples.append(
            Sample(label=label, confidence=confidence, round=len(state.samples) + 1)
        )
        state.candidates = CandidateSet.from_samples(state.samples, fixed_k=config.fixed_k)
        state.posterior = score(state.samples, state.candidates)


def _finalize(states: dict[str, QuestionState], predictions: dict[str, Label]) -> RunResult:
    per_question_calls = {qid: state.calls for qid, state in states.items()}
    total = sum(per_question_calls.values())
    return RunResult(
        predictions=predictions,
        avg_calls=total / len(states),
        per_question_calls=per_question_calls,
        per_question_posterior={qid: state.posterior for qid, state in states.items()},
        unresolved=tuple(qid for qid, state in states.items() if not state.resolved),
    )
