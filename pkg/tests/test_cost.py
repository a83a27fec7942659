import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greedycascade.abstain import AbstainingModel, RawFeature
from greedycascade.cost import (CompositeModel, CostGraph, CostGraphError, GraphCost, LinearCost,
                                composite_id, cost, cost_function_from_manifest,
                                make_prefix_composites, sequence_stage_costs)
from greedycascade.data import SOURCE, ModelManifest, PredictionLog, UnknownModelError
from greedycascade.oracle import (c_sigma, check_domination, path_enumeration_cost,
                                  random_graph_edges)

CHAIN = [(SOURCE, "m1", 2), ("m1", "m2", 3), (SOURCE, "m2", 5)]


def test_linear_cost_ignores_history():
    cf = LinearCost({"a": 1.5, "b": 2.0})
    assert cost(cf, "a") == cost(cf, "a", {"b"}) == 1.5
    with pytest.raises(UnknownModelError):
        cf.cost("zzz")
    with pytest.raises(ValueError):
        LinearCost({"a": -1})


def test_chain_example():
    cf = GraphCost.from_edges(["m1", "m2"], CHAIN)
    assert cost(cf, "m2", set()) == 5
    assert cost(cf, "m2", {"m1"}) == 3
    assert cost(cf, "m1", {"m2"}) == 2
    assert cost(cf, "m1", {"m1"}) == 0


def test_graph_errors():
    with pytest.raises(CostGraphError):
        CostGraph(["a", "b"], [(SOURCE, "a", 1)])
    with pytest.raises(CostGraphError):
        CostGraph(["a"], [(SOURCE, "a", -1)])
    with pytest.raises(CostGraphError):
        CostGraph(["a"], [(SOURCE, "zzz", 1)])
    cf = GraphCost.from_edges(["m1", "m2"], CHAIN)
    with pytest.raises(UnknownModelError):
        cf.cost("m3")
    with pytest.raises(UnknownModelError):
        cf.cost("m1", {"m3"})


def test_from_manifest():
    man = ModelManifest([("m1", 2.0), ("m2", 5.0)], [("m1", "m2", 3.0)])
    assert cost_function_from_manifest(man, "linear").cost("m2", {"m1"}) == 5
    assert cost_function_from_manifest(man, "graph").cost("m2", {"m1"}) == 3
    with pytest.raises(ValueError):
        cost_function_from_manifest(man, "hyper")


@pytest.mark.parametrize("seed", range(250))
def test_matches_path_enumeration(seed):
    rng = random.Random(seed)
    ids, edges = random_graph_edges(rng)
    cf = GraphCost.from_edges(ids, edges)
    for _ in range(4):
        already = {m for m in ids if rng.random() < 0.3}
        target = rng.choice(ids)
        assert cf.cost(target, already) == path_enumeration_cost(edges, already | {SOURCE}, target)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.data())
def test_more_sources_never_cost_more(seed, data):
    ids, edges = random_graph_edges(random.Random(seed))
    cf = GraphCost.from_edges(ids, edges)
    s = set(data.draw(st.lists(st.sampled_from(ids))))
    extra = set(data.draw(st.lists(st.sampled_from(ids))))
    for m in ids:
        assert cf.cost(m, s | extra) <= cf.cost(m, s) <= cf.cost(m, ())


def test_linear_set_dominates_repeat_free_sequence():
    cf = LinearCost({"a": 1, "b": 2, "c": 4})
    answered = {"a": {"x"}, "b": {"y"}, "c": {"x", "z"}}
    for seq in itertools.permutations("abc"):
        assert sum(cf.cost(m) for m in seq) == c_sigma(seq, cf)
        assert check_domination(set(seq), seq, cf, answered)


def _chain_pool():
    # three models with hand-chosen confidence features; m3 most confident
    q = {"m1": [0.9, 0.1, 0.1, 0.1], "m2": [0.1, 0.9, 0.1, 0.1], "m3": [0.1, 0.1, 0.9, 0.1]}
    ids = ["a", "b", "c", "d"]
    preds = {"m1": np.array([1, 1, 1, 1]), "m2": np.array([2, 2, 2, 2]), "m3": np.array([3, 3, 3, 3])}
    feats = {m: {"q": np.array(v)} for m, v in q.items()}
    log = PredictionLog(ids, [1, 2, 3, 0], preds, features=feats)
    abstaining = {m: AbstainingModel(m, RawFeature("q"), 0.5) for m in q}
    edges = [(SOURCE, "m1", 1), ("m1", "m2", 2), ("m2", "m3", 4),
             (SOURCE, "m2", 3), (SOURCE, "m3", 7)]
    return log, abstaining, GraphCost.from_edges(["m1", "m2", "m3"], edges)


def test_prefix_composites():
    log, abstaining, cf = _chain_pool()
    comps, aug = make_prefix_composites(["m1", "m2", "m3"], cf, log, abstaining)
    assert [c.model_id for c in comps] == [composite_id(m) for m in ("m1", "m2", "m3")]

    # a singleton prefix behaves exactly like its only member
    p1, a1 = comps[0].predict(log)
    q1, b1 = abstaining["m1"].predict(log)
    assert np.array_equal(a1, b1) and np.array_equal(p1[a1], q1[b1])
    for k, m in enumerate(["m1", "m2", "m3"]):
        assert aug.cost(comps[k].model_id, ()) == cf.cost(m, ())

    # m1 answers "a", m2 abstains there: the composite falls back to m1
    p2, a2 = comps[1].predict(log)
    assert a2[0] and p2[0] == 1 and p2[1] == 2

    # answered set of the full composite is the union of its members' sets
    union = np.zeros(len(log), dtype=bool)
    for m in abstaining.values():
        union |= m.predict(log)[1]
    assert np.array_equal(comps[2].predict(log)[1], union)

    # reuse between a model and its composite is free in both directions
    assert aug.cost("m2", {"m2*"}) == 0
    assert aug.cost("m2*", {"m2"}) == 0


def test_composite_dominates_prefix_sequences():
    log, abstaining, cf = _chain_pool()
    comps, aug = make_prefix_composites(["m1", "m2", "m3"], cf, log, abstaining)
    answered = {m: {e for e, a in zip(log.example_ids, w.predict(log)[1]) if a}
                for m, w in list(abstaining.items()) + [(c.model_id, c) for c in comps]}
    chain = ["m1", "m2", "m3"]
    for r in range(1, 4):
        for seq in itertools.permutations(chain, r):
            top = max(chain.index(m) for m in seq)
            assert check_domination([comps[top].model_id], list(seq), aug, answered)


def test_prefix_composite_errors():
    log, abstaining, cf = _chain_pool()
    with pytest.raises(CostGraphError):
        make_prefix_composites(["m1", "m3"], cf, log, abstaining)
    with pytest.raises(CostGraphError):
        make_prefix_composites(["m1"], LinearCost({"m1": 1}), log, abstaining)
    with pytest.raises(UnknownModelError):
        make_prefix_composites(["m1", "m2"], cf, log, {"m1": abstaining["m1"]})
    assert make_prefix_composites([], cf, log, abstaining) == ([], cf)


def test_sequence_stage_costs_track_reuse():
    log, abstaining, cf = _chain_pool()
    models = [abstaining["m1"], abstaining["m2"], abstaining["m3"]]
    assert sequence_stage_costs(models, cf) == [1, 2, 4]
    assert sequence_stage_costs(models[::-1], cf) == [7, 3, 1]  # edges are directed: knowing m3 does not help m2


def test_composite_to_dict():
    log, abstaining, cf = _chain_pool()
    d = CompositeModel("m2*", [abstaining["m1"], abstaining["m2"]]).to_dict()
    assert d["composite_chain"] == ["m1", "m2"]
