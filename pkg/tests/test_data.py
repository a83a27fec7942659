import json

import numpy as np
import pytest

from greedycascade.data import (LabeledExample, LogFormatError, Metric, ModelManifest,
                                ModelOutput, PredictionLog, SOURCE, dump_manifest,
                                dump_prediction_log, load_manifest, load_prediction_log,
                                metric_value)

from conftest import write_jsonl


def rec(eid, label, **models):
    return {"example_id": eid, "label": label, "models": models}


def test_empty_file_gives_empty_log(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    log = load_prediction_log(path)
    assert len(log) == 0
    assert log.model_ids == ()


def test_two_by_two_log(tmp_path):
    path = write_jsonl(tmp_path / "log.jsonl", [
        rec("e1", 0, m1={"prediction": 0, "scores": [2.0, 1.0]}, m2={"prediction": 1}),
        rec("e2", 1, m1={"prediction": 1, "scores": [0.0, 1.0]}, m2={"prediction": 1}),
    ])
    log = load_prediction_log(path)
    assert log.model_ids == ("m1", "m2")
    cells = [log.output(e, m) for e in log.example_ids for m in log.model_ids]
    assert len(cells) == 4
    assert log.output("e1", "m1") == ModelOutput(0, (2.0, 1.0))
    assert log.scores("m2") is None


def test_missing_cell_names_example_and_model(tmp_path):
    path = write_jsonl(tmp_path / "log.jsonl", [
        rec("e1", 0, m1={"prediction": 0}),
        rec("e2", 1, m2={"prediction": 1}),
    ])
    with pytest.raises(LogFormatError, match="e1.*m2|e2.*m1"):
        load_prediction_log(path)


@pytest.mark.parametrize("bad, pattern", [
    ('{"example_id": "e1", "label": 0, "models": {}}\n{"oops"\n', ":2:"),
    ('{"example_id": "e1", "label": "cat", "models": {}}\n', ":1:"),
    ('{"example_id": "e1", "label": 0, "models": {"m": {"score": 1}}}\n', ":1:"),
])
def test_malformed_record_reports_line(tmp_path, bad, pattern):
    path = tmp_path / "bad.jsonl"
    path.write_text(bad)
    with pytest.raises(LogFormatError, match=pattern):
        load_prediction_log(path)


def test_duplicate_example_id(tmp_path):
    path = write_jsonl(tmp_path / "log.jsonl", [rec("e1", 0, m={"prediction": 0})] * 2)
    with pytest.raises(LogFormatError, match="duplicate"):
        load_prediction_log(path)


def test_inconsistent_score_length(tmp_path):
    path = write_jsonl(tmp_path / "log.jsonl", [
        rec("e1", 0, m={"prediction": 0, "scores": [1.0, 0.0]}),
        rec("e2", 0, m={"prediction": 0, "scores": [1.0, 0.0, 0.0]}),
    ])
    with pytest.raises(LogFormatError, match="scores"):
        load_prediction_log(path)


def test_prediction_must_be_argmax_with_lowest_index_ties():
    assert ModelOutput(0, (1.0, 1.0)).prediction == 0
    with pytest.raises(LogFormatError):
        ModelOutput(1, (1.0, 1.0))


def test_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    s = rng.normal(size=(6, 4))
    log = PredictionLog([f"e{i}" for i in range(6)], rng.integers(4, size=6),
                        {"a": s.argmax(1), "b": rng.integers(4, size=6)}, {"a": s},
                        {"b": {"logit_gap": rng.random(6)}})
    dump_prediction_log(log, tmp_path / "x.jsonl")
    assert load_prediction_log(tmp_path / "x.jsonl") == log


def test_from_outputs_matches_loader(tmp_path):
    examples = [LabeledExample("a", 1), LabeledExample("b", 0)]
    outputs = {("a", "m"): ModelOutput(1, (0.0, 2.0)), ("b", "m"): ModelOutput(0, (3.0, 2.0))}
    log = PredictionLog.from_outputs(examples, ["m"], outputs)
    dump_prediction_log(log, tmp_path / "x.jsonl")
    assert load_prediction_log(tmp_path / "x.jsonl") == log
    assert log.examples == examples


@pytest.mark.parametrize("pred, label, expected", [(3, 3, 1), (3, 5, 0), (0, 0, 1)])
def test_metric_value_top1(pred, label, expected):
    assert metric_value(Metric.TOP1, pred, label) == expected
    assert metric_value("top1", pred, label) == expected


def test_manifest_round_trip_and_implied_source_edges(tmp_path):
    m = ModelManifest([("a", 2.0), ("b", 5.0)], [(SOURCE, "a", 2.0), ("a", "b", 3.0)])
    dump_manifest(m, tmp_path / "m.json")
    again = load_manifest(tmp_path / "m.json")
    assert again == m
    assert sorted(again.graph_edges()) == sorted([(SOURCE, "a", 2.0), (SOURCE, "b", 5.0),
                                                  ("a", "b", 3.0)])


@pytest.mark.parametrize("entries, edges", [
    ([("a", 1.0)], [("a", "zzz", 1.0)]),
    ([("a", 1.0)], [(SOURCE, "a", 2.0)]),
    ([("a", -1.0)], []),
    ([("a", 1.0), ("a", 2.0)], []),
])
def test_manifest_validation(entries, edges):
    with pytest.raises(LogFormatError):
        ModelManifest(entries, edges)


def test_manifest_file_uses_empty_set_symbol(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"models": [{"id": "a", "cost": 1}],
                                "reuse_edges": [{"from": "∅", "to": "a", "weight": 1}]}))
    assert load_manifest(path).reuse_edges == [(SOURCE, "a", 1.0)]
