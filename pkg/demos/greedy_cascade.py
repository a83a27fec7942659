"""Build a cascade on a five-model synthetic pool and sweep the accuracy target.

Run: python demos/greedy_cascade.py
"""
# %%
from greedycascade import synthetic
from greedycascade.abstain import RawFeature
from greedycascade.cascade import (CascadeFailure, ConfidentModelSet, MinRelativeAccuracy,
                                   evaluate_cascade, greedy_cascade)
from greedycascade.cost import LinearCost

train, test, manifest = synthetic.train_test_pools(seed=0, n_train=4000, n_test=4000)
cf = LinearCost(manifest.costs)
ref = "m4"
for m in manifest.model_ids:
    print(f"{m}: cost {cf.cost(m):5.1f}  test accuracy {test.accuracy(m):.3f}")

# %% [markdown]
# The constraint asks every stage to be at least as accurate as the reference
# on the examples it answers; the reference at threshold -inf is always
# available, so the build never fails.

# %%
pool = [(m, RawFeature("logit_gap")) for m in manifest.model_ids]
for alpha in (1.0, 0.99, 0.98, 0.97, 0.96, 0.95):
    ac = MinRelativeAccuracy(alpha, ref)
    trace = greedy_cascade(train.example_ids, ac, cf, ConfidentModelSet(pool, ac), train)
    if isinstance(trace, CascadeFailure):
        print(f"alpha={alpha}: no feasible cascade")
        continue
    report = evaluate_cascade(trace, test, cf=cf)
    stages = " -> ".join(m.model_id for m in trace.models)
    print(f"alpha={alpha:.2f}  accuracy {report.accuracy:.4f}  mean cost {report.mean_cost:5.2f} "
          f"({report.mean_cost / cf.cost(ref):.2f}x reference)  {stages}")

# %% per-stage breakdown at alpha = 1
ac = MinRelativeAccuracy(1.0, ref)
trace = greedy_cascade(train.example_ids, ac, cf, ConfidentModelSet(pool, ac), train)
for row in evaluate_cascade(trace, test, cf=cf).rows:
    print(f"stage {row.stage}: {row.model_id}  threshold {row.threshold:>8s}  "
          f"classified {row.fraction:6.1%}  accuracy {row.accuracy:.3f}")
