"""Computation reuse along a chain of models, and the prefix composites that exploit it.

Think of m0 -> m1 -> m2 as successively deeper heads on one network: running
m2 after m1 only costs the extra layers.

Run: python demos/reuse_chain.py
"""
# %%
from greedycascade import synthetic
from greedycascade.abstain import AbstainingModel, RawFeature
from greedycascade.cascade import (ConfidentModelSet, FixedGenerator, MinRelativeAccuracy,
                                   UnionGenerator, evaluate_cascade, greedy_cascade)
from greedycascade.cost import GraphCost, make_prefix_composites
from greedycascade.data import SOURCE

train, test, _ = synthetic.train_test_pools(seed=1, n_train=3000, n_test=3000,
                                            competence=(0.55, 0.75, 0.9), costs=(1, 2, 4))
chain = ["m0", "m1", "m2"]
edges = [(SOURCE, "m0", 1.0), ("m0", "m1", 1.0), ("m1", "m2", 2.0),
         (SOURCE, "m1", 2.0), (SOURCE, "m2", 4.0)]
cf = GraphCost.from_edges(chain, edges)
print("c(m2, {}) =", cf.cost("m2"), "  c(m2, {m1}) =", cf.cost("m2", {"m1"}),
      "  c(m2, {m0}) =", cf.cost("m2", {"m0"}))

# %% [markdown]
# A composite m*_k runs the prefix m0..mk and answers with the deepest member
# that is confident. It costs the same as m_k alone, so as a single stage it
# is never worse than any sequence drawn from that prefix. On this pool the
# plain cascade already walks the chain in order, so both builds cost the same.

# %%
ac = MinRelativeAccuracy(1.0, "m2")
pool = [(m, RawFeature("logit_gap")) for m in chain]
plain = ConfidentModelSet(pool, ac)
thresholded = {m.model_id: m for m in plain(range(len(train)), [], train)}
composites, aug = make_prefix_composites(chain, cf, train, thresholded)
for c in composites:
    print(f"{c.model_id}: members {list(c.chain)}, from-scratch cost {aug.cost(c.model_id)}")

for name, gen, cost_fn in [("plain pool", plain, cf),
                           ("pool + composites", UnionGenerator(plain, FixedGenerator(composites)),
                            aug)]:
    trace = greedy_cascade(train.example_ids, ac, cost_fn, gen, train)
    rep = evaluate_cascade(trace, test, cf=cost_fn)
    print(f"{name:18s} stages {[m.model_id for m in trace.models]}  "
          f"mean cost {rep.mean_cost:.3f}  accuracy {rep.accuracy:.4f} "
          f"(reference {test.accuracy('m2'):.4f})")
