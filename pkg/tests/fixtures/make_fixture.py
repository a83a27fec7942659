"""Regenerate the committed three-model fixture and its golden CLI outputs.

Run from the repository root: ``python tests/fixtures/make_fixture.py``.
Only rerun after an intended change to the build or report formats, and
review the diff of the golden files before committing.
"""

import io
from pathlib import Path

import numpy as np

from greedycascade.cli import main
from greedycascade.data import ModelManifest, PredictionLog, dump_manifest, dump_prediction_log
from greedycascade.synthetic import nested_pool

HERE = Path(__file__).parent / "three_model"
SEED = 20240611
N_TRAIN, N_TEST = 40, 40


def rounded(log: PredictionLog) -> PredictionLog:
    """Scores rounded to 3 decimals; predictions recomputed so they stay the argmax."""
    scores = {m: np.round(log.scores(m), 3) for m in log.model_ids}
    preds = {m: s.argmax(axis=1) for m, s in scores.items()}
    return PredictionLog(log.example_ids, log.labels, preds, scores)


def build_args():
    return ["build", "--train-log", str(HERE / "train.jsonl"), "--manifest",
            str(HERE / "manifest.json"), "--reference", "m2", "--alpha", "1.0",
            "--out", str(HERE / "cascade.json")]


def evaluate_args(out_csv):
    return ["evaluate", "--test-log", str(HERE / "test.jsonl"), "--manifest",
            str(HERE / "manifest.json"), "--cascade", str(HERE / "cascade.json"),
            "--out", str(out_csv)]


def write_inputs():
    HERE.mkdir(exist_ok=True)
    log, _ = nested_pool(N_TRAIN + N_TEST, SEED, competence=(0.5, 0.75, 0.9),
                         costs=(1.0, 3.0, 10.0), n_classes=3)
    log = rounded(log)
    dump_prediction_log(log.subset(np.arange(N_TRAIN)), HERE / "train.jsonl")
    dump_prediction_log(log.subset(np.arange(N_TRAIN, N_TRAIN + N_TEST)), HERE / "test.jsonl")
    dump_manifest(ModelManifest([("m0", 1.0), ("m1", 3.0), ("m2", 10.0)]),
                  HERE / "manifest.json")


def write_goldens():
    buf = io.StringIO()
    assert main(build_args(), buf) == 0
    (HERE / "build_stdout.txt").write_text(buf.getvalue(), encoding="utf-8")
    buf = io.StringIO()
    assert main(evaluate_args(HERE / "evaluate.csv"), buf) == 0
    (HERE / "evaluate_stdout.txt").write_text(buf.getvalue(), encoding="utf-8")


if __name__ == "__main__":
    write_inputs()
    write_goldens()
