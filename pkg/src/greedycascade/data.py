"""Examples, logged model outputs, model manifests and their file formats.

A prediction log is stored as JSON lines, one object per example::

    {"example_id": "e1", "label": 3,
     "models": {"m1": {"prediction": 3, "scores": [0.1, ...],
                       "features": {"logit_gap": 1.2}}}}

``scores`` and ``features`` are optional. A manifest is a single JSON object::

    {"models": [{"id": "m1", "cost": 49.0}, ...],
     "reuse_edges": [{"from": "∅", "to": "m1", "weight": 49.0}, ...]}
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

SOURCE = "∅"


class LogFormatError(ValueError):
    """Raised when a prediction log or manifest fails validation."""


class UnknownModelError(KeyError):
    pass


class UnknownExampleError(KeyError):
    pass


class Metric(str, enum.Enum):
    TOP1 = "top1"


def metric_value(kind: Metric | str, prediction: int, label: int) -> float:
    """Accuracy of a single prediction; TOP1 is 1.0 on an exact match."""
    kind = Metric(kind)
    if kind is Metric.TOP1:
        return 1.0 if int(prediction) == int(label) else 0.0
    raise ValueError(f"unsupported metric {kind!r}")


def metric_values(kind: Metric | str, predictions, labels) -> np.ndarray:
    kind = Metric(kind)
    if kind is Metric.TOP1:
        return (np.asarray(predictions) == np.asarray(labels)).astype(float)
    raise ValueError(f"unsupported metric {kind!r}")


@dataclass(frozen=True)
class LabeledExample:
    example_id: str
    label: int


@dataclass(frozen=True)
class ModelOutput:
    prediction: int
    scores: tuple[float, ...] | None = None
    features: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.scores is not None:
            top = int(np.argmax(self.scores))
            if top != self.prediction:
                raise LogFormatError(
                    f"prediction {self.prediction} is not the argmax ({top}) of scores")


class PredictionLog:
    """Validated, column-oriented table of per-example outputs of every model.

    Rows follow ``examples`` order. Per model we keep an integer prediction
    column, an optional ``(n, K)`` score matrix and optional named feature
    columns supplied by the log itself.
    """

    def __init__(self, example_ids: Sequence[str], labels, predictions=None,
                 scores=None, features=None):
        predictions = dict(predictions or {})
        scores = dict(scores or {})
        features = dict(features or {})
        self.example_ids = tuple(str(e) for e in example_ids)
        self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        n = len(self.example_ids)
        if self.labels.shape[0] != n:
            raise LogFormatError("labels and example ids differ in length")
        if (self.labels < 0).any():
            raise LogFormatError("labels must be non-negative class indices")
        self._index = {}
        for i, eid in enumerate(self.example_ids):
            if eid in self._index:
                raise LogFormatError(f"duplicate example_id {eid!r}")
            self._index[eid] = i

        self.model_ids = tuple(predictions)
        self._pred = {}
        self._scores = {}
        self._supplied = {}
        for mid, pred in predictions.items():
            pred = np.asarray(pred, dtype=np.int64).reshape(-1)
            if pred.shape[0] != n:
                raise LogFormatError(f"model {mid!r}: {pred.shape[0]} predictions for {n} examples")
            self._pred[mid] = pred
            s = scores.get(mid)
            if s is not None:
                s = np.asarray(s, dtype=float)
                if s.ndim != 2 or s.shape[0] != n:
                    raise LogFormatError(f"model {mid!r}: score matrix has shape {s.shape}")
                if n and not np.array_equal(np.argmax(s, axis=1), pred):
                    bad = int(np.flatnonzero(np.argmax(s, axis=1) != pred)[0])
                    raise LogFormatError(
                        f"model {mid!r}, example {self.example_ids[bad]!r}: "
                        "prediction is not the argmax of scores")
                self._scores[mid] = s
            f = features.get(mid) or {}
            self._supplied[mid] = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in f.items()}
            for k, v in self._supplied[mid].items():
                if v.shape[0] != n:
                    raise LogFormatError(f"model {mid!r}: feature {k!r} has wrong length")
        unknown = (set(scores) | set(features)) - set(predictions)
        if unknown:
            raise LogFormatError(f"scores/features given for unknown models {sorted(unknown)}")
        self._feature_cache = {}
        self._prob_cache = {}

    @classmethod
    def from_outputs(cls, examples: Sequence[LabeledExample], model_ids: Sequence[str],
                     outputs: Mapping[tuple[str, str], ModelOutput]) -> "PredictionLog":
        """Build a log from a total ``(example_id, model_id) -> ModelOutput`` map."""
        ids = [e.example_id for e in examples]
        if len(set(model_ids)) != len(model_ids):
            raise LogFormatError("model ids are not unique")
        preds, scores, feats = {}, {}, {}
        for mid in model_ids:
            cells = []
            for eid in ids:
                try:
                    cells.append(outputs[(eid, mid)])
                except KeyError:
                    raise LogFormatError(f"missing output for example {eid!r}, model {mid!r}") from None
            preds[mid] = [c.prediction for c in cells]
            scores[mid] = _stack_scores(mid, ids, [c.scores for c in cells])
            feats[mid] = _stack_features(mid, ids, [c.features for c in cells])
        return cls(ids, [e.label for e in examples], preds, scores, feats)

    # -- lookups ------------------------------------------------------------
    def __len__(self):
        return len(self.example_ids)

    @property
    def examples(self) -> list[LabeledExample]:
        return [LabeledExample(e, int(y)) for e, y in zip(self.example_ids, self.labels)]

    def index(self, example_ids: Iterable[str]) -> np.ndarray:
        try:
            return np.fromiter((self._index[e] for e in example_ids), dtype=np.int64)
        except KeyError as exc:
            raise UnknownExampleError(f"unknown example_id {exc.args[0]!r}") from None

    def row(self, example_id: str) -> int:
        try:
            return self._index[example_id]
        except KeyError:
            raise UnknownExampleError(f"unknown example_id {example_id!r}") from None

    def _check_model(self, model_id):
        if model_id not in self._pred:
            raise UnknownModelError(f"model {model_id!r} is not in the log")

    def predictions(self, model_id: str) -> np.ndarray:
        self._check_model(model_id)
        return self._pred[model_id]

    def scores(self, model_id: str) -> np.ndarray | None:
        self._check_model(model_id)
        return self._scores.get(model_id)

    def has_scores(self, model_id: str) -> bool:
        return self.scores(model_id) is not None

    def probabilities(self, model_id: str) -> np.ndarray:
        """Row-wise softmax of the model's scores."""
        if model_id not in self._prob_cache:
            s = self.scores(model_id)
            if s is None:
                raise LogFormatError(f"model {model_id!r} has no score vectors")
            z = np.exp(s - s.max(axis=1, keepdims=True))
            self._prob_cache[model_id] = z / z.sum(axis=1, keepdims=True)
        return self._prob_cache[model_id]

    def features(self, model_id: str) -> dict[str, np.ndarray]:
        """Confidence features for every row: score-derived ones plus any supplied in the log."""
        if model_id not in self._feature_cache:
            from .abstain import feature_columns

            self._check_model(model_id)
            cols = {}
            s = self._scores.get(model_id)
            if s is not None and s.shape[1] >= 2:
                cols.update(feature_columns(s))
            cols.update(self._supplied[model_id])
            self._feature_cache[model_id] = cols
        return self._feature_cache[model_id]

    def output(self, example_id: str, model_id: str) -> ModelOutput:
        i = self.row(example_id)
        s = self.scores(model_id)
        sup = self._supplied[model_id]
        return ModelOutput(
            int(self._pred[model_id][i]),
            None if s is None else tuple(float(v) for v in s[i]),
            {k: float(v[i]) for k, v in sup.items()} or None,
        )

    def correct(self, model_id: str, metric: Metric | str = Metric.TOP1) -> np.ndarray:
        return metric_values(metric, self.predictions(model_id), self.labels)

    def accuracy(self, model_id: str, metric: Metric | str = Metric.TOP1) -> float:
        return float(self.correct(model_id, metric).mean()) if len(self) else float("nan")

    def subset(self, rows) -> "PredictionLog":
        rows = np.asarray(rows, dtype=np.int64)
        return PredictionLog(
            [self.example_ids[i] for i in rows], self.labels[rows],
            {m: p[rows] for m, p in self._pred.items()},
            {m: s[rows] for m, s in self._scores.items()},
            {m: {k: v[rows] for k, v in f.items()} for m, f in self._supplied.items()},
        )

    def __eq__(self, other):
        if not isinstance(other, PredictionLog):
            return NotImplemented
        if (self.example_ids != other.example_ids or self.model_ids != other.model_ids
                or not np.array_equal(self.labels, other.labels)):
            return False
        for m in self.model_ids:
            if not np.array_equal(self._pred[m], other._pred[m]):
                return False
            a, b = self._scores.get(m), other._scores.get(m)
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
            fa, fb = self._supplied[m], other._supplied[m]
            if fa.keys() != fb.keys() or any(not np.array_equal(fa[k], fb[k]) for k in fa):
                return False
        return True

    __hash__ = None

    def __repr__(self):
        return f"PredictionLog({len(self)} examples, models={list(self.model_ids)})"


def _stack_scores(mid, ids, vectors):
    present = [v is not None for v in vectors]
    if not any(present):
        return None
    if not all(present):
        eid = ids[present.index(False)]
        raise LogFormatError(f"model {mid!r}: example {eid!r} lacks scores given elsewhere")
    length = len(vectors[0])
    for eid, v in zip(ids, vectors):
        if len(v) != length:
            raise LogFormatError(
                f"model {mid!r}: example {eid!r} has {len(v)} scores, expected {length}")
    return np.asarray(vectors, dtype=float).reshape(len(ids), length)


def _stack_features(mid, ids, maps):
    names = None
    for eid, f in zip(ids, maps):
        keys = frozenset(f or ())
        if names is None:
            names = keys
        elif keys != names:
            raise LogFormatError(f"model {mid!r}: example {eid!r} has a different feature set")
    if not names:
        return {}
    return {k: [float(f[k]) for f in maps] for k in sorted(names)}


# -- JSON lines I/O ---------------------------------------------------------

def load_prediction_log(path, schema: str = "jsonl") -> PredictionLog:
    if schema != "jsonl":
        raise ValueError(f"unsupported log schema {schema!r}")
    examples = []
    model_ids: list[str] = []
    outputs = {}
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                eid = rec["example_id"]
                label = rec["label"]
                models = rec["models"]
                if not isinstance(eid, str) or not isinstance(label, int) or isinstance(label, bool):
                    raise TypeError("example_id must be a string and label an integer")
                if not isinstance(models, dict):
                    raise TypeError("'models' must be an object")
                cells = {}
                for mid, out in models.items():
                    pred = out["prediction"]
                    if not isinstance(pred, int) or isinstance(pred, bool):
                        raise TypeError(f"model {mid!r}: prediction must be an integer")
                    scores = out.get("scores")
                    feats = out.get("features")
                    cells[mid] = ModelOutput(
                        pred,
                        None if scores is None else tuple(float(s) for s in scores),
                        None if feats is None else {str(k): float(v) for k, v in feats.items()},
                    )
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                raise LogFormatError(f"{path}:{lineno}: malformed record: {exc}") from None
            if eid in seen:
                raise LogFormatError(f"{path}:{lineno}: duplicate example_id {eid!r}")
            seen.add(eid)
            examples.append(LabeledExample(eid, label))
            for mid, cell in cells.items():
                if mid not in model_ids:
                    model_ids.append(mid)
                outputs[(eid, mid)] = cell
    for e in examples:
        for mid in model_ids:
            if (e.example_id, mid) not in outputs:
                raise LogFormatError(f"missing output for example {e.example_id!r}, model {mid!r}")
    return PredictionLog.from_outputs(examples, model_ids, outputs)


def dump_prediction_log(log: PredictionLog, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, (eid, label) in enumerate(zip(log.example_ids, log.labels)):
            models = {}
            for mid in log.model_ids:
                out = {"prediction": int(log.predictions(mid)[i])}
                s = log.scores(mid)
                if s is not None:
                    out["scores"] = [float(v) for v in s[i]]
                sup = log._supplied[mid]
                if sup:
                    out["features"] = {k: float(v[i]) for k, v in sup.items()}
                models[mid] = out
            fh.write(json.dumps({"example_id": eid, "label": int(label), "models": models}))
            fh.write("\n")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- manifest ---------------------------------------------------------------

@dataclass
class ModelManifest:
    """Per-model from-scratch costs plus optional computation-reuse edges."""

    entries: list[tuple[str, float]]
    reuse_edges: list[tuple[str, str, float]] = field(default_factory=list)

    def __post_init__(self):
        ids = [m for m, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise LogFormatError("manifest model ids are not unique")
        if SOURCE in ids:
            raise LogFormatError(f"{SOURCE!r} is reserved for the source vertex")
        costs = dict(self.entries)
        for m, c in self.entries:
            if not c >= 0:
                raise LogFormatError(f"model {m!r} has negative or invalid cost {c!r}")
        for u, v, w in self.reuse_edges:
            for end in (u, v):
                if end != SOURCE and end not in costs:
                    raise LogFormatError(f"reuse edge references unknown model {end!r}")
            if v == SOURCE:
                raise LogFormatError("reuse edges may not point into the source vertex")
            if not w >= 0:
                raise LogFormatError(f"reuse edge {u}->{v} has negative weight {w!r}")
            if u == SOURCE and w != costs[v]:
                raise LogFormatError(
                    f"source edge to {v!r} has weight {w} but the model's cost is {costs[v]}")

    @property
    def model_ids(self) -> list[str]:
        return [m for m, _ in self.entries]

    @property
    def costs(self) -> dict[str, float]:
        return dict(self.entries)

    def graph_edges(self) -> list[tuple[str, str, float]]:
        """All edges including the implied source edges ``(∅, m, cost)``."""
        explicit = {(u, v) for u, v, _ in self.reuse_edges if u == SOURCE}
        edges = [(SOURCE, m, c) for m, c in self.entries if (SOURCE, m) not in explicit]
        return edges + list(self.reuse_edges)

    def to_dict(self) -> dict:
        return {
            "models": [{"id": m, "cost": c} for m, c in self.entries],
            "reuse_edges": [{"from": u, "to": v, "weight": w} for u, v, w in self.reuse_edges],
        }


def load_manifest(path) -> ModelManifest:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        entries = [(str(m["id"]), float(m["cost"])) for m in raw["models"]]
        edges = [(str(e["from"]), str(e["to"]), float(e["weight"]))
                 for e in raw.get("reuse_edges", [])]
    except (ValueError, KeyError, TypeError) as exc:
        raise LogFormatError(f"{path}: malformed manifest: {exc}") from None
    return ModelManifest(entries, edges)


def dump_manifest(manifest: ModelManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, ensure_ascii=False)
        fh.write("\n")
