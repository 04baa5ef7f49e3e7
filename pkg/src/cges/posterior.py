"""Log-space Bayesian scoring of repeated answers weighted by their confidences.

The likelihood kernel is one-versus-rest: a sample whose label matches the
hypothesised answer has likelihood equal to its confidence C, and every other
hypothesis assigns it the residual mass (1 - C) / (K - 1), shared uniformly
across the K - 1 remaining candidates.  Multiplying these terms over all
samples and renormalizing yields a posterior over candidate answers.

All arithmetic is done in log space; direct products underflow once a few
hundred samples accumulate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Iterable, Optional, Sequence

from .errors import (
    CandidateCountError,
    ContradictoryHypothesesError,
    EmptySamplesError,
    UnknownLabelError,
)

Label = Hashable


@dataclass(frozen=True)
class Sample:
    """One (answer label, confidence) observation drawn at round ``round``.

    The confidence must lie strictly inside (0, 1); upstream estimators clamp
    to the interior so that log-likelihoods stay finite.
    """

    label: Label
    confidence: float
    round: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(
                f"confidence must lie strictly inside (0, 1), got {self.confidence!r}"
            )
        if self.round < 1:
            raise ValueError(f"round must be a positive integer, got {self.round!r}")


class KPolicy(Enum):
    """How the candidate count K is determined."""

    FIXED_K = "fixed"
    OBSERVED_PLUS_VIRTUAL = "observed+virtual"


@dataclass(frozen=True)
class CandidateSet:
    """Ordered distinct answer labels plus the policy fixing the count K.

    With ``fixed_k`` set, K is the given constant (multiple-choice style) and
    may exceed the number of labels seen so far; the unnamed remainder shares
    the all-mismatch score.  Without it, K is the number of observed labels
    plus one reserved virtual candidate that is never predicted.  The reserve
    keeps a single-sample posterior equal to its confidence instead of 1.
    """

    labels: tuple[Label, ...]
    fixed_k: Optional[int] = None

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("candidate labels must be pairwise distinct")
        if self.fixed_k is not None:
            if self.fixed_k < 2:
                raise CandidateCountError(
                    f"fixed candidate count must be >= 2, got {self.fixed_k}"
                )
            if self.fixed_k < len(self.labels):
                raise CandidateCountError(
                    f"fixed candidate count {self.fixed_k} is smaller than the "
                    f"{len(self.labels)} distinct labels observed"
                )
        elif len(self.labels) < 1:
            raise CandidateCountError(
                "observed+virtual policy needs at least one observed label"
            )

    @property
    def policy(self) -> KPolicy:
        return KPolicy.FIXED_K if self.fixed_k is not None else KPolicy.OBSERVED_PLUS_VIRTUAL

    @property
    def effective_k(self) -> int:
        if self.fixed_k is not None:
            return self.fixed_k
        return len(self.labels) + 1

    @classmethod
    def from_samples(
        cls, samples: Iterable[Sample], fixed_k: Optional[int] = None
    ) -> "CandidateSet":
        """Build the candidate set from samples, labels in first-seen order."""
        labels: dict[Label, None] = {}
        for sample in samples:
            labels.setdefault(sample.label, None)
        if not labels:
            raise EmptySamplesError("cannot build a candidate set from zero samples")
        return cls(labels=tuple(labels), fixed_k=fixed_k)


@dataclass(frozen=True)
class PosteriorVector:
    """Normalized posterior mass over candidate answers.

    ``virtual_mass`` is the combined mass of candidates that exist for
    normalization but carry no label: the single virtual candidate under the
    observed+virtual policy, or the unnamed remainder when a fixed K exceeds
    the number of named labels.  It is 0.0 when every candidate is named.
    """

    labels: tuple[Label, ...]
    masses: dict[Label, float]
    log_unnormalized: dict[Label, float]
    virtual_mass: float = 0.0
    reserve_log_unnormalized: Optional[float] = None
    log_normalizer: float = 0.0

    def top(self) -> tuple[Label, float]:
        return top(self)

    def top_log_mass(self) -> float:
        """log of the top candidate's mass, computed so it is exactly < 0
        whenever any competing mass is positive (robust at thresholds near 1)."""
        top_label, _ = top(self)
        top_log = self.log_unnormalized[top_label]
        tail = math.fsum(
            math.exp(self.log_unnormalized[label] - top_log)
            for label in self.labels
            if label != top_label
        )
        if self.reserve_log_unnormalized is not None:
            tail += math.exp(self.reserve_log_unnormalized - top_log)
        return -math.log1p(tail)


def log_likelihood(sample: Sample, hypothesis_matches: bool, effective_k: int) -> float:
    """Log-likelihood of one sample under a single hypothesis.

    Returns log C when the hypothesised answer equals the sample's label and
    log((1 - C) / (K - 1)) otherwise.
    """
    if effective_k < 2:
        raise CandidateCountError(
            f"effective candidate count must be >= 2, got {effective_k}"
        )
    if hypothesis_matches:
        return math.log(sample.confidence)
    return math.log1p(-sample.confidence) - math.log(effective_k - 1)


def llr_increment(
    sample: Sample, i_matches: bool, k_matches: bool, effective_k: int
) -> float:
    """Log-likelihood ratio contribution of one sample between two hypotheses.

    Positive values favour hypothesis i over hypothesis k; a sample matching
    neither contributes exactly zero.
    """
    if i_matches and k_matches:
        raise ContradictoryHypothesesError(
            "a sample cannot match both hypotheses of a likelihood ratio"
        )
    return log_likelihood(sample, i_matches, effective_k) - log_likelihood(
        sample, k_matches, effective_k
    )


def score(samples: Sequence[Sample], candidates: CandidateSet) -> PosteriorVector:
    """Posterior over candidates given all samples, via log-space products.

    For each candidate the unnormalized log score sums log C over matching
    samples and log((1 - C)/(K - 1)) over the rest; masses come out of a
    max-shifted log-sum-exp.  Unnamed candidates (the virtual reserve, or the
    remainder under a fixed K) share the all-mismatch score.
    """
    samples = list(samples)
    if not samples:
        raise EmptySamplesError("score() requires at least one sample")
    k = candidates.effective_k
    known = set(candidates.labels)
    log_k_minus_1 = math.log(k - 1)

    sum_log_miss = 0.0
    match_bonus: dict[Label, float] = {}
    for sample in samples:
        if sample.label not in known:
            raise UnknownLabelError(
                f"sample label {sample.label!r} is not in the fixed candidate set"
            )
        log_hit = math.log(sample.confidence)
        log_miss = math.log1p(-sample.confidence) - log_k_minus_1
        sum_log_miss += log_miss
        match_bonus[sample.label] = match_bonus.get(sample.label, 0.0) + (log_hit - log_miss)

    log_unnormalized = {
        label: sum_log_miss + match_bonus.get(label, 0.0) for label in candidates.labels
    }

    n_unnamed = k - len(candidates.labels)
    reserve_log: Optional[float] = None
    entries = list(log_unnormalized.values())
    if n_unnamed > 0:
        # aggregate score of the unnamed candidates, all identical by symmetry
        reserve_log = sum_log_miss + math.log(n_unnamed)
        entries.append(reserve_log)

    log_z = _logsumexp(entries)
    masses = {
        label: math.exp(value - log_z) for label, value in log_unnormalized.items()
    }
    virtual_mass = math.exp(reserve_log - log_z) if reserve_log is not None else 0.0
    return PosteriorVector(
        labels=candidates.labels,
        masses=masses,
        log_unnormalized=log_unnormalized,
        virtual_mass=virtual_mass,
        reserve_log_unnormalized=reserve_log,
        log_normalizer=log_z,
    )


def top(posterior: PosteriorVector) -> tuple[Label, float]:
    """The named candidate with maximal mass; ties go to the earliest-inserted label.

    The virtual reserve is never returned, even when it outweighs every named
    candidate.  Selection compares unnormalized log scores, which order the
    masses monotonically.
    """
    if not posterior.labels:
        raise EmptySamplesError("posterior has no real candidates")
    best = posterior.labels[0]
    best_log = posterior.log_unnormalized[best]
    for label in posterior.labels[1:]:
        value = posterior.log_unnormalized[label]
        if value > best_log:
            best, best_log = label, value
    return best, posterior.masses[best]


def _logsumexp(values: Sequence[float]) -> float:
    shift = max(values)
    return shift + math.log(math.fsum(math.exp(v - shift) for v in values))
