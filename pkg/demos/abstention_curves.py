"""Accuracy vs abstention rate for one synthetic model, under several confidence signals.

Run: python demos/abstention_curves.py
"""
# %%
import numpy as np

from greedycascade import synthetic
from greedycascade.abstain import RawFeature, abstention_tradeoff_curve, fit_accuracy_model

train, test, manifest = synthetic.train_test_pools(seed=3, n_train=3000, n_test=3000)
model = "m2"
print(f"{model}: test accuracy {test.accuracy(model):.3f}")

# %% [markdown]
# Each curve answers only examples whose predicted accuracy clears a threshold.
# The oracle curve abstains exactly on the mistakes, so it bounds every other one.

# %%
curves = {
    "logit gap": RawFeature("logit_gap"),
    "max prob": RawFeature("max_prob"),
    "logistic (fit on train)": fit_accuracy_model("logistic", train, model),
    "isotonic on gap (fit on train)": fit_accuracy_model("isotonic:logit_gap", train, model),
    "oracle": "oracle",
}


def accuracy_at(curve, rate):
    """Best accuracy reachable while abstaining on at most ``rate`` of examples."""
    return max(a for r, a in curve if r <= rate + 1e-12)


for name, acc_model in curves.items():
    curve = abstention_tradeoff_curve(model, acc_model, test)
    cells = "  ".join(f"{accuracy_at(curve, r):.3f}" for r in (0.0, 0.1, 0.25, 0.5))
    print(f"{name:32s} {cells}")
print(f"{'(abstention rate)':32s} " + "  ".join(f"{r:5.2f}" for r in (0.0, 0.1, 0.25, 0.5)))
