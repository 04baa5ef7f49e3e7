"""Scalar confidence estimators over token-level generation probabilities.

Each estimator maps a tokenized response (or an external reward score) to a
single confidence in the open interval (0, 1), clamped away from the
boundaries so downstream log-likelihoods stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .errors import ConfigurationError, EmptyResponseError, InvalidScoreError

DEFAULT_CLAMP_EPSILON = 1e-6


class Estimator(Enum):
    """Available confidence estimators; values double as record-store keys."""

    LNS_ARITHMETIC = "lns_arith"
    LNS_GEOMETRIC = "lns_geo"
    MARS_STEPWISE = "mars"
    REWARD_PASSTHROUGH = "rm"


@dataclass(frozen=True)
class ConfidenceConfig:
    estimator: Estimator = Estimator.LNS_ARITHMETIC
    clamp_epsilon: float = DEFAULT_CLAMP_EPSILON
    # restrict probability-based estimators to the answer span when one is known
    answer_span_only: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.clamp_epsilon < 0.5:
            raise ConfigurationError(
                f"clamp epsilon must lie in (0, 0.5), got {self.clamp_epsilon!r}"
            )


@dataclass(frozen=True)
class TokenizedResponse:
    """Per-token generation probabilities with optional step structure.

    ``step_boundaries`` are half-open (start, stop) token index ranges that
    partition [0, L); when omitted the whole response is a single step.
    ``step_importance`` holds one non-negative weight per step.
    """

    token_probs: tuple[float, ...]
    step_boundaries: Optional[tuple[tuple[int, int], ...]] = None
    step_importance: Optional[tuple[float, ...]] = None
    answer_span: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        if len(self.token_probs) == 0:
            raise EmptyResponseError("a tokenized response needs at least one token")
        for p in self.token_probs:
            if not 0.0 < p <= 1.0:
                raise ValueError(f"token probability must lie in (0, 1], got {p!r}")
        length = len(self.token_probs)
        if self.step_boundaries is not None:
            cursor = 0
            for start, stop in self.step_boundaries:
                if start != cursor or stop <= start:
                    raise ValueError(
                        "step boundaries must be contiguous non-empty ranges "
                        f"covering [0, {length}), got {self.step_boundaries!r}"
                    )
                cursor = stop
            if cursor != length:
                raise ValueError(
                    f"step boundaries cover [0, {cursor}) but the response has {length} tokens"
                )
        if self.step_importance is not None:
            if len(self.step_importance) != len(self.steps):
                raise ValueError(
                    f"got {len(self.step_importance)} importance scores for "
                    f"{len(self.steps)} steps"
                )
            for u in self.step_importance:
                if not (math.isfinite(u) and u >= 0.0):
                    raise ValueError(f"importance scores must be finite and >= 0, got {u!r}")
        if self.answer_span is not None:
            start, stop = self.answer_span
            if not 0 <= start < stop <= length:
                raise ValueError(f"answer span {self.answer_span!r} is out of range")

    @property
    def steps(self) -> tuple[tuple[int, int], ...]:
        if self.step_boundaries is not None:
            return self.step_boundaries
        return ((0, len(self.token_probs)),)

    @classmethod
    def from_steps(
        cls,
        step_probs: Sequence[Sequence[float]],
        step_importance: Optional[Sequence[float]] = None,
        answer_span: Optional[tuple[int, int]] = None,
    ) -> "TokenizedResponse":
        """Build a response from per-step token probability lists."""
        flat: list[float] = []
        boundaries: list[tuple[int, int]] = []
        for probs in step_probs:
            start = len(flat)
            flat.extend(probs)
            boundaries.append((start, len(flat)))
        return cls(
            token_probs=tuple(flat),
            step_boundaries=tuple(boundaries),
            step_importance=tuple(step_importance) if step_importance is not None else None,
            answer_span=answer_span,
        )

    def restrict_to_answer_span(self) -> "TokenizedResponse":
        """Slice the response down to its answer span (no-op when unset).

        Steps are intersected with the span and empty ones dropped, along with
        their importance scores.
        """
        if self.answer_span is None:
            return self
        lo, hi = self.answer_span
        boundaries: list[tuple[int, int]] = []
        kept: list[int] = []
        for idx, (start, stop) in enumerate(self.steps):
            start, stop = max(start, lo), min(stop, hi)
            if start < stop:
                boundaries.append((start - lo, stop - lo))
                kept.append(idx)
        importance = None
        if self.step_importance is not None:
            importance = tuple(self.step_importance[i] for i in kept)
        return TokenizedResponse(
            token_probs=self.token_probs[lo:hi],
            step_boundaries=tuple(boundaries),
            step_importance=importance,
        )


def clamp(value: float, epsilon: float = DEFAULT_CLAMP_EPSILON) -> float:
    """Clamp into [epsilon, 1 - epsilon]."""
    return min(max(value, epsilon), 1.0 - epsilon)


def lns_geometric(
    response: TokenizedResponse, clamp_epsilon: float = DEFAULT_CLAMP_EPSILON
) -> float:
    """Geometric mean of the token probabilities (length-normalized score)."""
    mean_log = math.fsum(math.log(p) for p in response.token_probs) / len(
        response.token_probs
    )
    return clamp(math.exp(mean_log), clamp_epsilon)


def lns_arithmetic(
    response: TokenizedResponse, clamp_epsilon: float = DEFAULT_CLAMP_EPSILON
) -> float:
    """Arithmetic mean of the token probabilities."""
    mean = math.fsum(response.token_probs) / len(response.token_probs)
    return clamp(mean, clamp_epsilon)


def mars_step_weights(step_importance: Sequence[float]) -> tuple[float, ...]:
    """Step weights 1/(2S) + u_s_normalized/2; all-zero importance falls back to uniform.

    The true weights sum to 1, so the last one is written as the complement of
    the rest; that keeps the float sum exactly 1.0.
    """
    n_steps = len(step_importance)
    if n_steps == 0:
        raise ConfigurationError("at least one step is required")
    total = math.fsum(step_importance)
    if total > 0.0:
        normalized = [u / total for u in step_importance]
    else:
        normalized = [1.0 / n_steps] * n_steps
    base = 1.0 / (2 * n_steps)
    weights = [base + u / 2.0 for u in normalized]
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    return tuple(weights)


def mars_stepwise(
    response: TokenizedResponse, clamp_epsilon: float = DEFAULT_CLAMP_EPSILON
) -> float:
    """Importance-weighted geometric mean over reasoning steps.

    Each step's probability is the geometric mean of its token probabilities;
    the step weights come from :func:`mars_step_weights`.
    """
    if response.step_importance is None:
        raise ConfigurationError(
            "step importance scores are required for the step-weighted estimator; "
            "attach them to the response or pick another estimator"
        )
    weights = mars_step_weights(response.step_importance)
    log_score = 0.0
    for (start, stop), weight in zip(response.steps, weights):
        step_log = math.fsum(
            math.log(p) for p in response.token_probs[start:stop]
        ) / (stop - start)
        log_score += weight * step_log
    return clamp(math.exp(log_score), clamp_epsilon)


def reward_passthrough(
    score: float, clamp_epsilon: float = DEFAULT_CLAMP_EPSILON
) -> float:
    """Use an external reward-model score directly as the confidence."""
    if not math.isfinite(score):
        raise InvalidScoreError(f"reward score must be finite, got {score!r}")
    return clamp(score, clamp_epsilon)


def estimate(
    config: ConfidenceConfig,
    response: Optional[TokenizedResponse] = None,
    reward_score: Optional[float] = None,
) -> float:
    """Dispatch to the configured estimator."""
    if config.estimator is Estimator.REWARD_PASSTHROUGH:
        if reward_score is None:
            raise ConfigurationError("reward passthrough needs a reward score")
        return reward_passthrough(reward_score, config.clamp_epsilon)
    if response is None:
        raise ConfigurationError(
            f"estimator {config.estimator.value} needs a tokenized response"
        )
    if config.answer_span_only:
        response = response.restrict_to_answer_span()
    if config.estimator is Estimator.LNS_GEOMETRIC:
        return lns_geometric(response, config.clamp_epsilon)
    if config.estimator is Estimator.LNS_ARITHMETIC:
        return lns_arithmetic(response, config.clamp_epsilon)
    return mars_stepwise(response, config.clamp_epsilon)
