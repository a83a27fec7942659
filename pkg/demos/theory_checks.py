"""The greedy cascade against exhaustive optima on small explicit instances.

Run: python demos/theory_checks.py
"""
# %%
from greedycascade.cost import LinearCost
from greedycascade.oracle import (SetCoverInstance, brute_force_opt, greedy_on_table,
                                  mssc_exhaustive, mssc_greedy, reduce_mssc,
                                  run_property_suites)

# %% a hand-sized instance where greedy happens to be optimal
models = {"m1": {"e1", "e2"}, "m2": {"e2", "e3"}, "m3": {"e1", "e2", "e3", "e4"}}
cf = LinearCost({"m1": 1, "m2": 1, "m3": 3})
R = ["e1", "e2", "e3", "e4"]
trace = greedy_on_table(R, models, cf)
print("greedy:", [m.model_id for m in trace.models], "T =", trace.total_cost)
print("optimum:", brute_force_opt(R, models, cf))

# %% [markdown]
# With unit costs and a constraint that always holds, a cascade is exactly an
# ordering of sets, and its total cost is the min-sum set cover objective.

# %%
inst = SetCoverInstance(["a", "b", "c", "d"],
                        [("Z1", {"a", "b"}), ("Z2", {"b", "c"}), ("Z3", {"c", "d"}),
                         ("Z4", {"d"})])
table, unit, always = reduce_mssc(inst)
t = greedy_on_table(inst.elements, table, unit, always)
print("cascade on reduction:", [m.model_id for m in t.models], "T =", t.total_cost)
print("set cover greedy:", mssc_greedy(inst), " exhaustive optimum:", mssc_exhaustive(inst))

# %% randomized suites
results = run_property_suites(trials=300, seed=1)
for r in results:
    print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  ({r.trials} trials)")
print(f"worst greedy/optimum ratio seen: {results[0].worst:.3f}")
