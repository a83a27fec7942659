import json
from pathlib import Path

import numpy as np
import pytest

from greedycascade.data import PredictionLog

FIXTURES = Path(__file__).parent / "fixtures"


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    return path


def qhat_log(qhat, correct, reference_correct=None):
    """One-model log whose supplied feature ``q`` is ``qhat``; ``ref`` is optional."""
    n = len(qhat)
    labels = np.zeros(n, dtype=int)
    preds = {"p": np.where(np.asarray(correct, bool), 0, 1)}
    feats = {"p": {"q": qhat}}
    if reference_correct is not None:
        preds["ref"] = np.where(np.asarray(reference_correct, bool), 0, 1)
        feats["ref"] = {"q": np.ones(n)}
    return PredictionLog([f"e{i}" for i in range(n)], labels, preds, None, feats)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> bool:
    line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
