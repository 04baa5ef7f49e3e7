"""Experiment orchestration: method comparisons, threshold sweeps, CSV reports.

Datasets are JSONL files with one question per line:
``{"id": ..., "prompt": ..., "gold": ..., "format": "boxed_math"|"letter_choice"}``.
Samples come either from a replay store or a live endpoint; results are
averaged over seeds and written as CSV tables plus a plain-text summary.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from statistics import fmean
from typing import Mapping, Optional, Sequence, Union

from .confidence import Estimator
from .controller import ControllerConfig, Method, RunResult, run
from .errors import ConfigurationError, KeyMismatchError
from .llmclient import (
    AnswerFormat,
    EndpointConfig,
    RecordStore,
    live_sampler,
    replay_sampler,
)

logger = logging.getLogger(__name__)

# stopping-threshold grid swept by default, ascending
DEFAULT_GAMMA_GRID = (0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.99, 0.999, 0.9999)
DEFAULT_SEEDS = (0, 1, 2)


@dataclass(frozen=True)
class Question:
    question_id: str
    prompt: str
    gold: str
    format: AnswerFormat


def load_dataset(path: Union[str, Path]) -> list[Question]:
    questions: list[Question] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            try:
                questions.append(
                    Question(
                        question_id=str(raw["id"]),
                        prompt=raw["prompt"],
                        gold=str(raw["gold"]),
                        format=AnswerFormat(raw["format"]),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ConfigurationError(f"{path}:{line_no}: bad question record: {exc}") from exc
    if not questions:
        raise ConfigurationError(f"dataset {path} holds no questions")
    return questions


def normalize_answer(label: str, fmt: Optional[AnswerFormat] = None) -> str:
    """Trim, collapse internal whitespace, and case-fold letter choices."""
    normalized = " ".join(str(label).split())
    if fmt is AnswerFormat.LETTER_CHOICE:
        normalized = normalized.upper()
    return normalized


def accuracy(
    predictions: Mapping[str, str],
    gold: Mapping[str, str],
    formats: Union[Mapping[str, AnswerFormat], AnswerFormat, None] = None,
) -> float:
    """Fraction of questions whose normalized prediction matches the gold label."""
    missing = sorted(set(gold) - set(predictions))
    extra = sorted(set(predictions) - set(gold))
    if missing or extra:
        raise KeyMismatchError(
            f"prediction/gold key mismatch; missing={missing!r} extra={extra!r}"
        )
    if not gold:
        raise KeyMismatchError("gold map is empty")
    hits = 0
    for qid, answer in gold.items():
        fmt = formats.get(qid) if isinstance(formats, Mapping) else formats
        if normalize_answer(predictions[qid], fmt) == normalize_answer(answer, fmt):
            hits += 1
    return hits / len(gold)


@dataclass
class ExperimentSpec:
    """Everything needed to run one experiment over a question set."""

    questions: Sequence[Question]
    methods: Sequence[ControllerConfig]
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID
    seeds: Sequence[int] = DEFAULT_SEEDS
    estimator: Estimator = Estimator.LNS_ARITHMETIC
    store: Optional[RecordStore] = None
    endpoint: Optional[EndpointConfig] = None
    record_store: Optional[RecordStore] = None

    def __post_init__(self) -> None:
        if not self.questions:
            raise ConfigurationError("experiment needs at least one question")
        if not self.seeds:
            raise ConfigurationError("experiment needs at least one seed")
        if (self.store is None) == (self.endpoint is None):
            raise ConfigurationError(
                "provide exactly one sample source: a replay store or an endpoint"
            )
        if self.record_store is not None and len(self.seeds) > 1:
            # records are keyed (question, round); a second seed would collide
            raise ConfigurationError("recording a live run requires a single seed")
        for gamma in self.gamma_grid:
            if not 0.0 < gamma <= 1.0:
                raise ConfigurationError(f"gamma grid values must lie in (0, 1], got {gamma!r}")

    @property
    def gold(self) -> dict[str, str]:
        return {q.question_id: q.gold for q in self.questions}

    @property
    def formats(self) -> dict[str, AnswerFormat]:
        return {q.question_id: q.format for q in self.questions}


@dataclass(frozen=True)
class MethodRow:
    method: str
    gamma: Optional[float]
    avg_calls: float
    accuracy: float
    delta_calls: Optional[float] = None
    delta_acc: Optional[float] = None


@dataclass(frozen=True)
class CurvePoint:
    gamma: float
    avg_calls: float
    accuracy: float


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[MethodRow, ...]
    curve: tuple[CurvePoint, ...] = ()


def method_label(config: ControllerConfig) -> str:
    if config.method is Method.ESC:
        return f"esc_w{config.esc_window}"
    return config.method.value


def _make_sampler(spec: ExperimentSpec, seed: int):
    if spec.store is not None:
        return replay_sampler(spec.store, spec.estimator)
    prompts = {q.question_id: (q.prompt, q.format) for q in spec.questions}
    return live_sampler(
        spec.endpoint,
        prompts,
        estimator=spec.estimator,
        store=spec.record_store,
        base_seed=seed,
    )


def run_method(spec: ExperimentSpec, config: ControllerConfig) -> tuple[float, float]:
    """Seed-averaged (avg_calls, accuracy) for one method configuration."""
    calls: list[float] = []
    accs: list[float] = []
    qids = [q.question_id for q in spec.questions]
    for seed in spec.seeds:
        sampler = _make_sampler(spec, seed)
        result = run(qids, sampler, config)
        calls.append(result.avg_calls)
        accs.append(accuracy(result.predictions, spec.gold, spec.formats))
    return fmean(calls), fmean(accs)


def compare_methods(spec: ExperimentSpec) -> ComparisonReport:
    """Run every configured method and report deltas against the SC row."""
    measured = [
        (config, *run_method(spec, config)) for config in spec.methods
    ]
    sc = next(
        ((calls, acc) for config, calls, acc in measured if config.method is Method.SC),
        None,
    )
    rows = []
    for config, calls, acc in measured:
        delta_calls = calls - sc[0] if sc is not None else None
        delta_acc = acc - sc[1] if sc is not None else None
        rows.append(
            MethodRow(
                method=method_label(config),
                gamma=config.gamma if config.method is Method.CGES else None,
                avg_calls=calls,
                accuracy=acc,
                delta_calls=delta_calls,
                delta_acc=delta_acc,
            )
        )
    return ComparisonReport(rows=tuple(rows))


def sweep_gamma(
    spec: ExperimentSpec, base: Optional[ControllerConfig] = None
) -> tuple[CurvePoint, ...]:
    """One seed-averaged curve point per grid threshold, in grid order."""
    if base is None:
        base = next(
            (config for config in spec.methods if config.method is Method.CGES), None
        )
    if base is None or base.method is not Method.CGES:
        raise ConfigurationError("gamma sweep needs a CGES method configuration")
    if not spec.gamma_grid:
        logger.warning("gamma grid is empty; emitting an empty curve")
        return ()
    points = []
    for gamma in spec.gamma_grid:
        calls, acc = run_method(spec, replace(base, gamma=gamma))
        points.append(CurvePoint(gamma=gamma, avg_calls=calls, accuracy=acc))
    return tuple(points)


def select_operating_points(
    curve: Sequence[CurvePoint], sc_accuracy: float
) -> tuple[CurvePoint, CurvePoint]:
    """(efficient, conservative) curve points.

    Efficient is the smallest threshold whose accuracy matches or beats the
    fixed-budget baseline; conservative is the largest threshold considered.
    When the baseline is never matched, both coincide at the largest threshold.
    """
    if not curve:
        raise ConfigurationError("cannot select operating points from an empty curve")
    ordered = sorted(curve, key=lambda p: p.gamma)
    conservative = ordered[-1]
    efficient = next((p for p in ordered if p.accuracy >= sc_accuracy), conservative)
    return efficient, conservative


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _cell(value) -> str:
    return "" if value is None else str(value)


def write_comparison_csv(report: ComparisonReport, path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method", "gamma", "avg_calls", "accuracy", "delta_calls", "delta_acc"])
        for row in report.rows:
            writer.writerow(
                [
                    row.method,
                    _cell(row.gamma),
                    row.avg_calls,
                    row.accuracy,
                    _cell(row.delta_calls),
                    _cell(row.delta_acc),
                ]
            )


def write_curve_csv(curve: Sequence[CurvePoint], path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["gamma", "avg_calls", "accuracy"])
        for point in curve:
            writer.writerow([point.gamma, point.avg_calls, point.accuracy])


def write_predictions_csv(
    result: RunResult, questions: Sequence[Question], path: Union[str, Path]
) -> None:
    """Per-question predictions in dataset order; byte-stable across reruns."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["question_id", "prediction", "calls", "top_mass", "resolved"])
        unresolved = set(result.unresolved)
        for question in questions:
            qid = question.question_id
            posterior = result.per_question_posterior[qid]
            writer.writerow(
                [
                    qid,
                    result.predictions[qid],
                    result.per_question_calls[qid],
                    posterior.top()[1],
                    int(qid not in unresolved),
                ]
            )


def summarize_report(report: ComparisonReport) -> str:
    lines = [f"{'method':<12} {'gamma':>8} {'avg_calls':>10} {'accuracy':>9} {'d_calls':>8} {'d_acc':>8}"]
    for row in report.rows:
        lines.append(
            f"{row.method:<12} {_cell(row.gamma):>8} {row.avg_calls:>10.3f} "
            f"{row.accuracy:>9.4f} "
            f"{(f'{row.delta_calls:+.3f}' if row.delta_calls is not None else '-'):>8} "
            f"{(f'{row.delta_acc:+.4f}' if row.delta_acc is not None else '-'):>8}"
        )
    return "\n".join(lines)
