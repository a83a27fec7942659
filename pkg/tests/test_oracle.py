import random
from fractions import Fraction

import pytest

from greedycascade.cost import LinearCost
from greedycascade.oracle import (InstanceTooLargeError, SetCoverInstance, brute_force_opt,
                                  c_sigma, check_domination, enumerate_sequences,
                                  greedy_on_table, lemma_bound_holds, max_single_model_rate,
                                  mssc_cost, mssc_exhaustive, mssc_greedy, random_table_instance,
                                  reduce_mssc, run_property_suites, sequence_total_cost)

THREE = {"m1": {"e1", "e2"}, "m2": {"e2", "e3"}, "m3": {"e1", "e2", "e3", "e4"}}
THREE_COSTS = LinearCost({"m1": 1, "m2": 1, "m3": 3})
R4 = ["e1", "e2", "e3", "e4"]


class TestBruteForce:
    def test_single_model(self):
        seq, opt = brute_force_opt(R4, {"m": set(R4)}, LinearCost({"m": 2.5}))
        assert seq == ("m",) and opt == 10

    def test_three_model_instance(self):
        seq, opt = brute_force_opt(R4, THREE, THREE_COSTS)
        assert opt == 9

    def test_duplicate_model(self):
        dup = dict(THREE, m1b=THREE["m1"])
        cf = LinearCost({"m1": 1, "m2": 1, "m3": 3, "m1b": 1})
        assert brute_force_opt(R4, dup, cf)[1] == 9

    def test_matches_all_permutations(self):
        # independent check: every ordering of every subset, no pruning
        import itertools
        best = min(sequence_total_cost(p, R4, {k: frozenset(v) for k, v in THREE.items()},
                                       THREE_COSTS)
                   for r in range(1, 4) for p in itertools.permutations(THREE, r)
                   if set().union(*(THREE[m] for m in p)) == set(R4))
        assert best == 9

    def test_unanswerable_examples_pay_whole_sequence(self):
        seq, opt = brute_force_opt(["a", "b"], {"m": {"a"}}, LinearCost({"m": 2}))
        assert opt == 4

    def test_constraint_filters_stages(self):
        ac = lambda m, answered: m != "m1"
        seq, opt = brute_force_opt(R4, THREE, THREE_COSTS, ac)
        assert "m1" not in seq

    def test_too_large(self):
        models = {f"m{i}": {"a"} for i in range(9)}
        with pytest.raises(InstanceTooLargeError):
            brute_force_opt(["a"], models, LinearCost({m: 1 for m in models}))
        with pytest.raises(InstanceTooLargeError):
            brute_force_opt([f"x{i}" for i in range(13)], {"m": set()}, LinearCost({"m": 1}))

    def test_enumerated_sequences_are_productive(self):
        for seq in enumerate_sequences(R4, {k: frozenset(v) for k, v in THREE.items()}):
            assert len(set(seq)) == len(seq)


class TestRate:
    def test_single(self):
        assert max_single_model_rate(R4, {"m": set(R4)}, LinearCost({"m": 2})) == 2

    def test_three_model_instance(self):
        assert max_single_model_rate(R4, THREE, THREE_COSTS) == 2

    def test_empty_answered_set(self):
        assert max_single_model_rate(R4, {"m": set()}, LinearCost({"m": 1})) == 0

    def test_bound_on_three_model_instance(self):
        frozen = {k: frozenset(v) for k, v in THREE.items()}
        for seq in enumerate_sequences(R4, frozen):
            assert lemma_bound_holds(seq, R4, frozen, THREE_COSTS)

    def test_rational_costs_are_exact(self):
        cf = LinearCost({"a": Fraction(1, 3), "b": Fraction(2, 3)})
        models = {"a": frozenset({"x"}), "b": frozenset({"y", "z"})}
        assert max_single_model_rate(["x", "y", "z"], models, cf) == 3
        assert c_sigma(["a", "b"], cf) == 1
        assert lemma_bound_holds(["a", "b"], ["x", "y", "z"], models, cf)


class TestDomination:
    def test_underlying_set(self):
        cf = LinearCost({"m1": 1, "m2": 2})
        assert check_domination({"m1", "m2"}, ["m2", "m1"], cf, THREE)

    def test_missing_unique_answerer(self):
        cf = LinearCost({"m1": 1, "m2": 2})
        assert not check_domination({"m1"}, ["m1", "m2"], cf, THREE)

    def test_costlier_set(self):
        cf = LinearCost({"m1": 1, "m3": 3})
        assert not check_domination({"m3"}, ["m1"], cf, THREE)


class TestMSSC:
    def test_hand_example(self):
        inst = SetCoverInstance(["a", "b", "c"], [("Z1", {"a", "b"}), ("Z2", {"b", "c"})])
        table, cf, ac = reduce_mssc(inst)
        trace = greedy_on_table(inst.elements, table, cf, ac)
        assert [m.model_id for m in trace.models] == ["Z1", "Z2"]
        assert trace.total_cost == 4
        assert mssc_greedy(inst) == (["Z1", "Z2"], 4)
        assert mssc_exhaustive(inst) == 4

    def test_single_covering_set(self):
        inst = SetCoverInstance(list("abcde"), [("Z", set("abcde"))])
        table, cf, ac = reduce_mssc(inst)
        assert greedy_on_table(inst.elements, table, cf, ac).total_cost == 5

    @pytest.mark.parametrize("n", [1, 2, 4, 6])
    def test_disjoint_singletons(self, n):
        elements = [f"e{i}" for i in range(n)]
        inst = SetCoverInstance(elements, [(f"Z{i}", {e}) for i, e in enumerate(elements)])
        table, cf, ac = reduce_mssc(inst)
        assert greedy_on_table(elements, table, cf, ac).total_cost == n * (n + 1) // 2
        assert brute_force_opt(elements, table, cf)[1] == n * (n + 1) // 2
        assert mssc_cost(list(reversed(table)), inst) == n * (n + 1) // 2

    def test_uncoverable(self):
        with pytest.raises(ValueError):
            SetCoverInstance(["a", "b"], [("Z", {"a"})])


def test_random_instances_are_coverable_and_seeded():
    a = random_table_instance(random.Random(5))
    b = random_table_instance(random.Random(5))
    assert a[0] == b[0] and a[1] == b[1]
    R, models, _ = a
    assert set(R) <= set().union(*models.values())


def test_property_suites_small_run():
    results = run_property_suites(trials=60, seed=3)
    assert [r.passed for r in results] == [True] * 4
    assert all(r.trials > 0 for r in results)
    assert 1 <= results[0].worst <= 4
