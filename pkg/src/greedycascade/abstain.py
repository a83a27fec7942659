"""Abstaining models: confidence features, accuracy models and thresholding.

An abstaining model wraps a logged base model with an accuracy model that
predicts how accurate the base prediction is on each example; it answers when
the predicted accuracy reaches its threshold and abstains otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .data import Metric, PredictionLog, metric_values

ABSTAIN = None

FEATURE_NAMES = ("entropy", "max_prob", "logit_gap", "neg_entropy")
WEIGHT_CAP = 25.0


class FeatureUnavailableError(ValueError):
    pass


class MissingFeatureError(KeyError):
    pass


@dataclass(frozen=True)
class ConfidenceFeatures:
    entropy: float
    max_prob: float
    logit_gap: float

    @property
    def neg_entropy(self) -> float:
        return -self.entropy

    def as_dict(self) -> dict[str, float]:
        return {"entropy": self.entropy, "max_prob": self.max_prob,
                "logit_gap": self.logit_gap, "neg_entropy": -self.entropy}


def feature_columns(scores: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorised confidence features for an ``(n, K)`` matrix of logits."""
    scores = np.asarray(scores, dtype=float)
    shifted = scores - scores.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    z = expd.sum(axis=1)
    p = expd / z[:, None]
    # H = log Z - sum_k p_k * s_k, with s already max-shifted
    entropy = np.maximum(np.log(z) - (p * shifted).sum(axis=1), 0.0)
    top2 = -np.partition(-scores, 1, axis=1)[:, :2]
    return {
        "entropy": entropy,
        "max_prob": 1.0 / z,
        "logit_gap": top2[:, 0] - top2[:, 1],
        "neg_entropy": -entropy,
    }


def compute_features(output) -> ConfidenceFeatures:
    """Confidence features of one logged output (anything with ``.scores``)."""
    scores = getattr(output, "scores", output)
    if scores is None or len(scores) < 2:
        raise FeatureUnavailableError("confidence features need a score vector with >= 2 entries")
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise FeatureUnavailableError("scores must be finite")
    cols = feature_columns(scores[None, :])
    return ConfidenceFeatures(float(cols["entropy"][0]), float(cols["max_prob"][0]),
                              float(cols["logit_gap"][0]))


# -- accuracy models -----------------------------------------------------------

def _lookup(features, name):
    if isinstance(features, ConfidenceFeatures):
        features = features.as_dict()
    try:
        return np.asarray(features[name], dtype=float)
    except KeyError:
        raise MissingFeatureError(f"accuracy model needs feature {name!r}") from None


def _scalar_or_array(a):
    return float(a) if np.ndim(a) == 0 else a


@dataclass(frozen=True)
class RawFeature:
    """Uses a confidence feature directly as the predicted accuracy."""

    feature: str

    @property
    def feature_names(self):
        return (self.feature,)

    def predict(self, features):
        return _scalar_or_array(_lookup(features, self.feature))

    def describe(self) -> str:
        return f"raw:{self.feature}"

    def to_dict(self) -> dict:
        return {"kind": "raw", "feature": self.feature}


@dataclass(frozen=True)
class Logistic:
    weights: tuple[float, ...]
    bias: float
    features: tuple[str, ...]

    @property
    def feature_names(self):
        return self.features

    def predict(self, features):
        z = self.bias
        for w, name in zip(self.weights, self.features):
            z = z + w * _lookup(features, name)
        return _scalar_or_array(_sigmoid(np.asarray(z, dtype=float)))

    def describe(self) -> str:
        return "logistic(" + ",".join(self.features) + ")"

    def to_dict(self) -> dict:
        return {"kind": "logistic", "weights": list(self.weights), "bias": self.bias,
                "features": list(self.features)}


@dataclass(frozen=True)
class Isotonic:
    """Non-decreasing step function of one feature; clamps outside the breakpoints."""

    feature: str
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.breakpoints) != len(self.values) or not self.breakpoints:
            raise ValueError("isotonic model needs matching, non-empty breakpoints and values")
        if any(not a < b for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly ascending")

    @property
    def feature_names(self):
        return (self.feature,)

    def predict(self, features):
        x = _lookup(features, self.feature)
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right") - 1
        out = np.asarray(self.values)[np.clip(idx, 0, len(self.values) - 1)]
        return _scalar_or_array(out)

    def describe(self) -> str:
        return f"isotonic:{self.feature}"

    def to_dict(self) -> dict:
        return {"kind": "isotonic", "feature": self.feature,
                "breakpoints": list(self.breakpoints), "values": list(self.values)}


AccuracyModel = RawFeature | Logistic | Isotonic


def predict_accuracy(model: AccuracyModel, features):
    return model.predict(features)


def accuracy_model_from_dict(d: Mapping) -> AccuracyModel:
    kind = d["kind"]
    if kind == "raw":
        return RawFeature(d["feature"])
    if kind == "logistic":
        return Logistic(tuple(float(w) for w in d["weights"]), float(d["bias"]),
                        tuple(d["features"]))
    if kind == "isotonic":
        return Isotonic(d["feature"], tuple(float(b) for b in d["breakpoints"]),
                        tuple(float(v) for v in d["values"]))
    raise ValueError(f"unknown accuracy model kind {kind!r}")


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def logistic_loss(weights, bias, X, y) -> float:
    z = np.asarray(X, dtype=float) @ np.asarray(weights, dtype=float) + bias
    return float(np.mean(np.logaddexp(0.0, z) - np.asarray(y, dtype=float) * z))


def fit_logistic(features, accuracies, names: Sequence[str] | None = None,
                 cap: float = WEIGHT_CAP) -> Logistic:
    """Minimise mean logistic loss with every parameter boxed to ``[-cap, cap]``.

    The box keeps separable data (including the all-correct case) from
    driving the parameters to infinity, so the fit is a well-posed convex
    problem solved by L-BFGS-B from a zero start.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(accuracies, dtype=float).reshape(-1)
    if X.size == 0 or y.size == 0:
        raise ValueError("fit_logistic needs at least one sample")
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"feature matrix {X.shape} does not match {y.shape[0]} targets")
    n, d = X.shape
    names = tuple(names) if names is not None else tuple(f"f{j}" for j in range(d))
    if len(names) != d:
        raise ValueError("one name per feature column required")
    Xb = np.hstack([X, np.ones((n, 1))])

    def objective(theta):
        z = Xb @ theta
        loss = np.mean(np.logaddexp(0.0, z) - y * z)
        grad = Xb.T @ (_sigmoid(z) - y) / n
        return loss, grad

    res = minimize(objective, np.zeros(d + 1), jac=True, method="L-BFGS-B",
                   bounds=[(-cap, cap)] * (d + 1),
                   options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-10})
    theta = res.x
    return Logistic(tuple(float(w) for w in theta[:d]), float(theta[d]), names)


def pool_adjacent_violators(values, weights=None) -> np.ndarray:
    """Weighted least-squares non-decreasing fit of a sequence."""
    values = np.asarray(values, dtype=float)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    means, wsum, counts = [], [], []
    for v, w in zip(values, weights):
        means.append(v)
        wsum.append(w)
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            w2 = wsum[-2] + wsum[-1]
            m2 = (means[-2] * wsum[-2] + means[-1] * wsum[-1]) / w2
            c2 = counts[-2] + counts[-1]
            del means[-1], wsum[-1], counts[-1]
            means[-1], wsum[-1], counts[-1] = m2, w2, c2
    return np.repeat(means, counts)


def fit_isotonic(feature_values, accuracies, feature: str = "x") -> Isotonic:
    x = np.asarray(feature_values, dtype=float).reshape(-1)
    y = np.asarray(accuracies, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("fit_isotonic needs at least one sample")
    if x.shape != y.shape:
        raise ValueError("feature values and accuracies differ in length")
    xs, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    means = np.bincount(inverse, weights=y) / counts
    fitted = pool_adjacent_violators(means, counts)
    return Isotonic(feature, tuple(float(b) for b in xs), tuple(float(v) for v in fitted))


def default_logistic_features(cols: Mapping[str, np.ndarray]) -> tuple[str, ...]:
    """Entropy, max probability and logit gap when available, else every supplied feature."""
    if all(f in cols for f in ("entropy", "max_prob", "logit_gap")):
        return ("entropy", "max_prob", "logit_gap")
    return tuple(sorted(k for k in cols if k != "neg_entropy"))


def make_fitter(descriptor: str
                ) -> Callable[[Mapping[str, np.ndarray], np.ndarray], AccuracyModel]:
    """Turn a kind string (``raw:<f>``, ``logistic``, ``isotonic:<f>``) into a fitting function.

    The returned callable maps ``(feature columns, per-example accuracy)`` to
    a fitted accuracy model.
    """
    kind, _, arg = descriptor.partition(":")
    if kind == "raw":
        if not arg:
            raise ValueError("raw accuracy model needs a feature name, e.g. raw:logit_gap")
        return lambda cols, acc: RawFeature(arg)
    if kind == "isotonic":
        if not arg:
            raise ValueError("isotonic accuracy model needs a feature name")
        return lambda cols, acc: fit_isotonic(_lookup(cols, arg), acc, feature=arg)
    if kind == "logistic":
        def fit(cols, acc):
            names = (tuple(n.strip() for n in arg.split(","))
                     if arg else default_logistic_features(cols))
            X = np.column_stack([_lookup(cols, n) for n in names])
            return fit_logistic(X, acc, names)
        return fit
    raise ValueError(f"unknown accuracy model kind {descriptor!r}")


def fit_accuracy_model(descriptor: str, log: PredictionLog, model_id: str,
                       metric: Metric | str = Metric.TOP1) -> AccuracyModel:
    return make_fitter(descriptor)(log.features(model_id), log.correct(model_id, metric))


# -- abstaining models ----------------------------------------------------------

def format_threshold(t: float) -> str:
    if t == math.inf:
        return "+inf"
    if t == -math.inf:
        return "-inf"
    return repr(float(t))


@dataclass(frozen=True)
class AbstainingModel:
    """Logged base model that answers iff its predicted accuracy is >= threshold."""

    model_id: str
    accuracy_model: AccuracyModel
    threshold: float = -math.inf

    provenance = "pool"

    @property
    def key(self) -> str:
        return f"{self.model_id}|{self.accuracy_model.describe()}|{format_threshold(self.threshold)}"

    @property
    def computes(self) -> tuple[str, ...]:
        return (self.model_id,)

    def qhat(self, log: PredictionLog) -> np.ndarray:
        return np.asarray(self.accuracy_model.predict(log.features(self.model_id)), dtype=float)

    def predict(self, log: PredictionLog) -> tuple[np.ndarray, np.ndarray]:
        """Base predictions and the boolean "answers" mask over every row of ``log``."""
        pred = log.predictions(self.model_id)
        if self.threshold == -math.inf:
            return pred, np.ones(len(log), dtype=bool)
        if self.threshold == math.inf:
            return pred, np.zeros(len(log), dtype=bool)
        return pred, self.qhat(log) >= self.threshold

    def marginal_cost(self, cf, computed):
        return cf.cost(self.model_id, computed)

    def with_threshold(self, threshold: float) -> "AbstainingModel":
        return AbstainingModel(self.model_id, self.accuracy_model, threshold)

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "accuracy_model": self.accuracy_model.to_dict(),
                "threshold": format_threshold(self.threshold)}


def evaluate_abstaining(model: AbstainingModel, log: PredictionLog, example_id: str):
    """Prediction of ``model`` on one example, or ``ABSTAIN``."""
    i = log.row(example_id)
    pred = int(log.predictions(model.model_id)[i])
    t = model.threshold
    if t == -math.inf:
        return pred
    if t == math.inf:
        return ABSTAIN
    qhat = float(model.accuracy_model.predict({k: v[i] for k, v in log.features(model.model_id).items()}))
    return pred if qhat >= t else ABSTAIN


def tradeoff_curve(qhat, accuracy) -> list[tuple[float, float]]:
    """(abstention rate, mean accuracy on answered) for thresholds -inf and every distinct qhat."""
    qhat = np.asarray(qhat, dtype=float)
    accuracy = np.asarray(accuracy, dtype=float)
    n = qhat.size
    if n == 0:
        return []
    points = [(0.0, float(accuracy.mean()))]
    for t in np.unique(qhat):
        answered = qhat >= t
        k = int(answered.sum())
        if k:
            points.append(((n - k) / n, float(accuracy[answered].mean())))
    points.sort(key=lambda p: p[0])
    return points


def abstention_tradeoff_curve(model_id: str, accuracy_model, log: PredictionLog,
                              metric: Metric | str = Metric.TOP1) -> list[tuple[float, float]]:
    """Accuracy-vs-abstention curve of ``model_id`` thresholded on ``accuracy_model``.

    Pass ``accuracy_model="oracle"`` for the perfect predictor whose predicted
    accuracy is the true metric value, which abstains exactly on mistakes.
    """
    acc = log.correct(model_id, metric)
    if isinstance(accuracy_model, str) and accuracy_model == "oracle":
        qhat = acc
    else:
        qhat = accuracy_model.predict(log.features(model_id))
    return tradeoff_curve(qhat, acc)


def oracle_accuracy_values(log: PredictionLog, model_id: str,
                           metric: Metric | str = Metric.TOP1) -> np.ndarray:
    return metric_values(metric, log.predictions(model_id), log.labels)
