"""Accuracy constraints, abstaining-model generators and the greedy cascade builder.

Stage models share a small duck-typed interface:

``model_id`` / ``key``
    display name and the total-order identity used for tie-breaking.
``provenance``
    ``"pool"``, ``"ensemble"``, ``"composite"`` or ``"table"``.
``predict(log) -> (predictions, answered)``
    arrays over every row of the log.
``computes``
    ids whose outputs are available once the stage has run.
``marginal_cost(cf, computed)``
    stage cost given the ids computed by earlier stages.

Generators are callables ``generator(rows, prior_models, log) -> list`` where
``rows`` holds the log row indices of the examples still unanswered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .abstain import (AbstainingModel, AccuracyModel, RawFeature, accuracy_model_from_dict,
                      feature_columns, format_threshold, make_fitter)
from .cost import CompositeModel, sequence_stage_costs
from .data import LogFormatError, Metric, PredictionLog, metric_values

RIDGE = 1e-6


# -- accuracy constraints --------------------------------------------------------

@dataclass(frozen=True)
class AlwaysTrue:
    kind = "always_true"

    def check(self, predictions, rows, log) -> bool:
        return True

    def prefix_check(self, predictions, rows, log, ends) -> np.ndarray:
        return np.ones(len(ends), dtype=bool)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


def _exact_geq(lhs, alpha, rhs) -> bool:
    # alpha is read as the shortest decimal that round-trips, so 0.9 means 9/10
    return Fraction(lhs) >= Fraction(repr(float(alpha))) * Fraction(rhs)


@dataclass(frozen=True)
class MinRelativeAccuracy:
    """Summed metric of the model must reach ``alpha`` times the reference's, on the same subset.

    Comparisons are exact in rational arithmetic, so the constraint is
    decomposable bit-for-bit: passing on disjoint sets implies passing on
    their union.
    """

    alpha: float
    reference: str
    metric: Metric = Metric.TOP1

    kind = "min_relative"

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        object.__setattr__(self, "metric", Metric(self.metric))

    def _values(self, predictions, rows, log):
        rows = np.asarray(rows, dtype=np.int64)
        labels = log.labels[rows]
        ref = log.predictions(self.reference)[rows]
        return (metric_values(self.metric, predictions, labels),
                metric_values(self.metric, ref, labels))

    def check(self, predictions, rows, log) -> bool:
        q, q_ref = self._values(predictions, rows, log)
        return _exact_geq(q.sum(), self.alpha, q_ref.sum())

    def prefix_check(self, predictions, rows, log, ends) -> np.ndarray:
        """Constraint on each prefix ``rows[:e]`` for ``e`` in ``ends``."""
        q, q_ref = self._values(predictions, rows, log)
        idx = np.asarray(ends, dtype=np.int64) - 1
        cq = np.cumsum(q)[idx]
        cr = np.cumsum(q_ref)[idx]
        gap = cq - self.alpha * cr
        ok = gap > 0
        close = np.abs(gap) <= 1e-9 * np.maximum(1.0, cr)
        for j in np.flatnonzero(close):
            ok[j] = _exact_geq(cq[j], self.alpha, cr[j])
        return ok

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "metric": self.metric.value,
                "reference": self.reference}


def constraint_from_dict(d: Mapping):
    if d["kind"] == "always_true":
        return AlwaysTrue()
    if d["kind"] == "min_relative":
        return MinRelativeAccuracy(float(d["alpha"]), d["reference"], Metric(d["metric"]))
    raise ValueError(f"unknown constraint kind {d['kind']!r}")


def answered_set(m, R: Iterable[str], log: PredictionLog) -> set[str]:
    rows = log.index(R)
    _, answered = m.predict(log)
    return {log.example_ids[i] for i in rows[answered[rows]]}


def check_constraint(ac, m, subset: Iterable[str], log: PredictionLog) -> bool:
    rows = log.index(subset)
    pred, _ = m.predict(log)
    return bool(ac.check(pred[rows], rows, log))


# -- generators ------------------------------------------------------------------

def min_threshold(qhat, predictions, rows, ac, log) -> float:
    """Smallest threshold among ``{-inf} ∪ qhat`` at which ``ac`` holds on the answered rows.

    Returns ``+inf`` when no candidate passes (the empty answered set always does).
    """
    qhat = np.asarray(qhat, dtype=float)
    if qhat.size == 0:
        return -math.inf
    order = np.argsort(-qhat, kind="stable")
    qs = qhat[order]
    ends = np.flatnonzero(np.r_[qs[1:] != qs[:-1], True]) + 1
    ok = ac.prefix_check(np.asarray(predictions)[order], np.asarray(rows)[order], log, ends)
    if ok[-1]:
        return -math.inf
    passing = np.flatnonzero(ok)
    if passing.size:
        return float(qs[ends[passing[-1]] - 1])
    return math.inf


def _confident_models(rows, pool, ac, log):
    out = []
    for model_id, accuracy_model in pool:
        base = AbstainingModel(model_id, accuracy_model)
        q = base.qhat(log)[rows]
        t = min_threshold(q, log.predictions(model_id)[rows], rows, ac, log)
        out.append(base.with_threshold(t))
    return out


def confident_model_set(R: Iterable[str], pool: Sequence[tuple[str, AccuracyModel]], ac,
                        log: PredictionLog) -> list[AbstainingModel]:
    """One abstaining model per (model, accuracy model) pair, thresholded as low as ``ac`` allows."""
    rows = log.index(R)
    if rows.size == 0:
        raise ValueError("confident_model_set needs a non-empty example set")
    return _confident_models(rows, pool, ac, log)


class ConfidentModelSet:
    """Generator wrapping :func:`confident_model_set` around a fixed pool."""

    def __init__(self, pool: Sequence[tuple[str, AccuracyModel]], ac):
        self.pool = list(pool)
        self.ac = ac

    def __call__(self, rows, prior, log):
        return _confident_models(np.asarray(rows, dtype=np.int64), self.pool, self.ac, log)


class FixedGenerator:
    """Returns the same candidate models on every iteration."""

    def __init__(self, models):
        self.models = list(models)

    def __call__(self, rows, prior, log):
        return list(self.models)


class UnionGenerator:
    def __init__(self, *generators):
        self.generators = generators

    def __call__(self, rows, prior, log):
        return [m for g in self.generators for m in g(rows, prior, log)]


class EnsembleModel:
    """Weighted average of component softmax outputs, thresholded on an accuracy model.

    Features for the accuracy model are computed from ``log`` of the combined
    (clipped) probability vector, so ``logit_gap`` is the log-ratio of the two
    largest combined probabilities.
    """

    provenance = "ensemble"

    def __init__(self, components: Sequence[str], beta: Sequence[float],
                 accuracy_model: AccuracyModel = RawFeature("logit_gap"),
                 threshold: float = -math.inf, overhead: float = 0.0):
        if len(components) != len(beta) or not components:
            raise ValueError("ensemble needs one weight per component")
        self.components = tuple(components)
        self.beta = tuple(float(b) for b in beta)
        self.accuracy_model = accuracy_model
        self.threshold = threshold
        self.overhead = overhead
        self.model_id = "ensemble(" + "+".join(self.components) + ")"

    @property
    def key(self) -> str:
        return (f"{self.model_id}|{self.accuracy_model.describe()}|"
                f"{format_threshold(self.threshold)}")

    @property
    def computes(self) -> tuple[str, ...]:
        return self.components

    def combined(self, log: PredictionLog) -> np.ndarray:
        for c in self.components:
            if not log.has_scores(c):
                raise LogFormatError(f"ensemble component {c!r} has no score vectors")
        return sum(b * log.probabilities(c) for b, c in zip(self.beta, self.components))

    def features(self, log: PredictionLog) -> dict[str, np.ndarray]:
        p = self.combined(log)
        p = np.clip(p, 1e-300, None)
        return feature_columns(np.log(p / p.sum(axis=1, keepdims=True)))

    def qhat(self, log):
        return np.asarray(self.accuracy_model.predict(self.features(log)), dtype=float)

    def predict(self, log):
        pred = np.argmax(self.combined(log), axis=1)
        if self.threshold == -math.inf:
            return pred, np.ones(len(log), dtype=bool)
        if self.threshold == math.inf:
            return pred, np.zeros(len(log), dtype=bool)
        return pred, self.qhat(log) >= self.threshold

    def marginal_cost(self, cf, computed):
        done = set(computed)
        total = 0
        for c in self.components:
            if c not in done:
                total += cf.cost(c, done)
                done.add(c)
        return total + self.overhead * len(self.components)

    def with_threshold(self, threshold):
        return EnsembleModel(self.components, self.beta, self.accuracy_model, threshold,
                             self.overhead)

    def to_dict(self) -> dict:
        return {"model_id": self.model_id,
                "ensemble": {"components": list(self.components), "beta": list(self.beta),
                             "overhead": self.overhead},
                "accuracy_model": self.accuracy_model.to_dict(),
                "threshold": format_threshold(self.threshold)}

    def __repr__(self):
        return f"EnsembleModel({list(self.components)}, beta={list(self.beta)})"


def ensemble_squared_error(probs: Sequence[np.ndarray], labels, beta) -> float:
    target = np.eye(probs[0].shape[1])[np.asarray(labels)]
    mix = sum(b * p for b, p in zip(beta, probs))
    return float(((mix - target) ** 2).sum())


def fit_ensemble_weights(probs: Sequence[np.ndarray], labels, ridge: float = RIDGE) -> np.ndarray:
    """Ridge least squares of one-hot labels on the component probability vectors."""
    if len(probs) == 1:
        return np.ones(1)
    k = probs[0].shape[1]
    if any(p.shape[1] != k for p in probs):
        raise LogFormatError("ensemble components disagree on the number of classes")
    A = np.column_stack([p.reshape(-1) for p in probs])
    y = np.eye(k)[np.asarray(labels)].reshape(-1)
    return np.linalg.solve(A.T @ A + ridge * np.eye(A.shape[1]), A.T @ y)


def _prior_bases(prior) -> list[str]:
    bases: list[str] = []
    for m in prior:
        for c in getattr(m, "components", None) or (m.model_id,):
            if c not in bases:
                bases.append(c)
    return bases


def ensemble_generator(rows, prior, pool: Sequence[str], ac, log: PredictionLog,
                       accuracy: str = "raw:logit_gap", metric: Metric = Metric.TOP1,
                       overhead: float = 0.0) -> list[EnsembleModel]:
    """For each pool model, an ensemble with the earlier stages' base models.

    Weights are fitted on the remaining rows; the accuracy model (built by
    ``accuracy``, see :func:`make_fitter`) is fitted on the same rows and the
    threshold is set by :func:`min_threshold`.
    """
    rows = np.asarray(rows, dtype=np.int64)
    fitter = make_fitter(accuracy)
    bases = _prior_bases(prior)
    labels = log.labels[rows]
    out = []
    for p in pool:
        components = bases + [p]
        for c in components:
            if not log.has_scores(c):
                raise LogFormatError(f"ensemble component {c!r} has no score vectors")
        probs = [log.probabilities(c)[rows] for c in components]
        beta = fit_ensemble_weights(probs, labels)
        ens = EnsembleModel(components, beta, overhead=overhead)
        cols = {k: v[rows] for k, v in ens.features(log).items()}
        pred = ens.predict(log)[0][rows]
        ens.accuracy_model = fitter(cols, metric_values(metric, pred, labels))
        t = min_threshold(ens.qhat(log)[rows], pred, rows, ac, log)
        out.append(ens.with_threshold(t))
    return out


class EnsembleGenerator:
    def __init__(self, pool: Sequence[str], ac, accuracy: str = "raw:logit_gap",
                 metric: Metric = Metric.TOP1, overhead: float = 0.0):
        self.pool = list(pool)
        self.ac = ac
        self.accuracy = accuracy
        self.metric = metric
        self.overhead = overhead

    def __call__(self, rows, prior, log):
        return ensemble_generator(rows, prior, self.pool, self.ac, log, self.accuracy,
                                  self.metric, self.overhead)


# -- greedy cascade --------------------------------------------------------------

@dataclass
class StageRecord:
    model: object
    answered: tuple[str, ...]
    n_remaining: int
    cost: float
    ratio: float


@dataclass
class CascadeTrace:
    stages: list[StageRecord] = field(default_factory=list)

    @property
    def models(self) -> list:
        return [s.model for s in self.stages]

    @property
    def cascade(self) -> "Cascade":
        return Cascade(self.models)

    @property
    def total_stage_cost(self):
        """Cost of running every stage once."""
        return sum((s.cost for s in self.stages), 0)

    @property
    def total_cost(self):
        """Sum over stages of (examples reaching the stage) x (stage cost)."""
        return sum((s.n_remaining * s.cost for s in self.stages), 0)

    def __len__(self):
        return len(self.stages)


@dataclass(frozen=True)
class CascadeFailure:
    """Returned when no generated model is both useful and accurate on what remains."""

    stage: int
    remaining: tuple[str, ...]

    def __bool__(self):
        return False


def _rank(k: int, c, key: str):
    if c == 0:
        return (0, 0, -k, 0, key)
    c = Fraction(c)
    return (1, -Fraction(k) / c, -k, c, key)


def greedy_cascade(R: Iterable[str], ac, cf, generator: Callable, log: PredictionLog):
    """Build a cascade by repeatedly taking the best answered-examples-per-cost model.

    Ties in the ratio go to the model answering more examples, then the
    cheaper one, then the lexicographically smaller ``key``; a zero-cost model
    that answers something outranks every finite ratio. Returns a
    :class:`CascadeTrace`, or a :class:`CascadeFailure` when some iteration has
    no useful model satisfying ``ac``.
    """
    rows = np.unique(log.index(R))
    remaining = np.zeros(len(log), dtype=bool)
    remaining[rows] = True
    n = int(remaining.sum())
    trace = CascadeTrace()
    computed: frozenset[str] = frozenset()
    while n > 0:
        rem_rows = np.flatnonzero(remaining)
        best = None
        for m in generator(rem_rows, trace.models, log):
            pred, answered = m.predict(log)
            hit = answered & remaining
            k = int(hit.sum())
            if k == 0:
                continue
            hit_rows = np.flatnonzero(hit)
            if not ac.check(pred[hit_rows], hit_rows, log):
                continue
            c = m.marginal_cost(cf, computed)
            rank = _rank(k, c, m.key)
            if best is None or rank < best[0]:
                best = (rank, m, hit_rows, c)
        if best is None:
            return CascadeFailure(len(trace) + 1, tuple(log.example_ids[i] for i in rem_rows))
        _, m, hit_rows, c = best
        ratio = math.inf if c == 0 else len(hit_rows) / float(c)
        trace.stages.append(StageRecord(m, tuple(log.example_ids[i] for i in hit_rows),
                                        n, c, ratio))
        remaining[hit_rows] = False
        computed = computed | frozenset(m.computes)
        n -= len(hit_rows)
    return trace


# -- running and scoring cascades -------------------------------------------------

class Cascade:
    """Ordered stage models; the first stage that answers supplies the prediction."""

    def __init__(self, models: Sequence):
        self.models = tuple(models)

    def __len__(self):
        return len(self.models)

    def run(self, log: PredictionLog) -> tuple[np.ndarray, np.ndarray]:
        """Per-row prediction and answering stage index (``-1`` if every stage abstains)."""
        n = len(log)
        pred = np.full(n, -1, dtype=np.int64)
        stage = np.full(n, -1, dtype=np.int64)
        for i, m in enumerate(self.models):
            open_ = stage < 0
            if not open_.any():
                break
            p, a = m.predict(log)
            take = open_ & a
            pred[take] = p[take]
            stage[take] = i
        return pred, stage

    def stage_costs(self, cf) -> list:
        return sequence_stage_costs(self.models, cf)

    def to_dict(self) -> dict:
        return {"stages": [m.to_dict() for m in self.models]}


def _as_cascade(c) -> Cascade:
    if isinstance(c, CascadeTrace):
        return c.cascade
    if isinstance(c, Cascade):
        return c
    return Cascade(c)


def example_costs(cascade, log: PredictionLog, cf) -> np.ndarray:
    """Cost paid on every row: stage costs up to and including the first answering stage."""
    cascade = _as_cascade(cascade)
    if not len(cascade):
        return np.zeros(len(log))
    cum = np.cumsum(np.asarray(cascade.stage_costs(cf), dtype=float))
    _, stage = cascade.run(log)
    return np.where(stage >= 0, cum[np.maximum(stage, 0)], cum[-1])


def per_example_cost(cascade, example_id: str, cf, log: PredictionLog):
    cascade = _as_cascade(cascade)
    costs = cascade.stage_costs(cf)
    i = log.row(example_id)
    total = 0
    for m, c in zip(cascade.models, costs):
        total += c
        if m.predict(log)[1][i]:
            break
    return total


@dataclass
class StageRow:
    stage: int
    model_id: str
    cost: float
    threshold: str
    n_classified: int
    fraction: float
    accuracy: float


@dataclass
class CascadeReport:
    accuracy: float
    mean_cost: float
    n_examples: int
    unanswered: float
    rows: list[StageRow]


def evaluate_cascade(cascade, log: PredictionLog, metric: Metric = Metric.TOP1,
                     cf=None) -> CascadeReport:
    """Accuracy, mean per-example cost and per-stage statistics of a cascade on a log."""
    cascade = _as_cascade(cascade)
    n = len(log)
    pred, stage = cascade.run(log)
    value = np.where(stage >= 0, metric_values(metric, pred, log.labels), 0.0)
    costs = cascade.stage_costs(cf) if cf is not None else [math.nan] * len(cascade)
    rows = []
    for i, (m, c) in enumerate(zip(cascade.models, costs)):
        mask = stage == i
        k = int(mask.sum())
        rows.append(StageRow(i + 1, m.model_id, c,
                             format_threshold(getattr(m, "threshold", math.nan)),
                             k, k / n if n else math.nan,
                             float(value[mask].mean()) if k else math.nan))
    mean_cost = float(example_costs(cascade, log, cf).mean()) if (cf is not None and n) else math.nan
    return CascadeReport(float(value.mean()) if n else math.nan, mean_cost, n,
                         float((stage < 0).mean()) if n else 0.0, rows)


# -- JSON ------------------------------------------------------------------------

def _parse_threshold(t) -> float:
    if t in ("-inf", "+inf", "inf"):
        return -math.inf if t == "-inf" else math.inf
    return float(t)


def stage_model_from_dict(d: Mapping):
    if "composite_chain" in d:
        return CompositeModel(d["model_id"], [stage_model_from_dict(x) for x in d["members"]])
    acc = accuracy_model_from_dict(d["accuracy_model"])
    t = _parse_threshold(d["threshold"])
    if "ensemble" in d:
        e = d["ensemble"]
        return EnsembleModel(e["components"], e["beta"], acc, t, float(e.get("overhead", 0.0)))
    return AbstainingModel(d["model_id"], acc, t)


def cascade_to_dict(cascade, constraint=None, cost_kind: str | None = None,
                    build_stats: Mapping | None = None) -> dict:
    out = _as_cascade(cascade).to_dict()
    if constraint is not None:
        out["constraint"] = constraint.to_dict()
    if cost_kind is not None:
        out["cost"] = {"kind": cost_kind}
    if build_stats is not None:
        out["build_stats"] = dict(build_stats)
    return out


def cascade_from_dict(d: Mapping) -> Cascade:
    return Cascade([stage_model_from_dict(s) for s in d["stages"]])
