"""Seeded synthetic model pools with nested competence.

Every example gets a latent difficulty in [0, 1), skewed towards easy
examples by ``difficulty_power``. Model ``j`` has a
competence level; it is correct when competence minus difficulty (plus a
little per-model noise) is positive, and its logit gap grows with that
margin. Cheaper models have lower competence, so they are right mostly on
easy examples and are confident there.
"""

from __future__ import annotations

import numpy as np

from .data import ModelManifest, PredictionLog

DEFAULT_COMPETENCE = (0.45, 0.6, 0.72, 0.82, 0.9)
DEFAULT_COSTS = (1.0, 2.0, 3.5, 6.0, 10.0)


def nested_pool(n_examples: int, seed: int, competence=DEFAULT_COMPETENCE,
                costs=DEFAULT_COSTS, n_classes: int = 10, margin_noise: float = 0.08,
                gap_noise: float = 0.1, gap_scale: float = 8.0, difficulty_power: float = 2.5,
                prefix: str = "x", model_prefix: str = "m"):
    """Returns ``(log, manifest)`` for a pool of ``len(competence)`` models."""
    if len(competence) != len(costs):
        raise ValueError("one cost per model required")
    rng = np.random.default_rng(seed)
    n, K = n_examples, n_classes
    difficulty = rng.random(n) ** difficulty_power
    labels = rng.integers(K, size=n)
    ids = [f"{prefix}{i:05d}" for i in range(n)]
    predictions, scores = {}, {}
    rows = np.arange(n)
    for j, level in enumerate(competence):
        mid = f"{model_prefix}{j}"
        margin = level - difficulty + margin_noise * rng.standard_normal(n)
        correct = margin > 0
        wrong = (labels + rng.integers(1, K, size=n)) % K
        pred = np.where(correct, labels, wrong)
        s = rng.standard_normal((n, K))
        confidence = np.abs(margin) * np.where(correct, 1.0, 0.25) + gap_noise * rng.standard_normal(n)
        gap = np.log1p(np.exp(gap_scale * confidence)) / 2 + 1e-3
        others = s.copy()
        others[rows, pred] = -np.inf
        s[rows, pred] = others.max(axis=1) + gap
        predictions[mid] = pred
        scores[mid] = s
    log = PredictionLog(ids, labels, predictions, scores)
    manifest = ModelManifest([(f"{model_prefix}{j}", float(c)) for j, c in enumerate(costs)])
    return log, manifest


def train_test_pools(seed: int, n_train: int, n_test: int, **kwargs):
    """Two disjoint logs drawn from the same distribution, plus the shared manifest."""
    log, manifest = nested_pool(n_train + n_test, seed, **kwargs)
    return (log.subset(np.arange(n_train)), log.subset(np.arange(n_train, n_train + n_test)),
            manifest)
