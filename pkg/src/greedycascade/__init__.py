"""Greedy construction of cost-aware cascades of abstaining models from logged predictions."""

from .abstain import (ABSTAIN, AbstainingModel, ConfidenceFeatures, Isotonic, Logistic,
                      RawFeature, abstention_tradeoff_curve, compute_features, evaluate_abstaining,
                      fit_isotonic, fit_logistic, predict_accuracy)
from .cascade import (AlwaysTrue, Cascade, CascadeFailure, CascadeTrace, ConfidentModelSet,
                      EnsembleGenerator, EnsembleModel, MinRelativeAccuracy, answered_set,
                      check_constraint, confident_model_set, ensemble_generator,
                      evaluate_cascade, example_costs, greedy_cascade, per_example_cost)
from .cost import (SOURCE, CompositeModel, CostGraph, GraphCost, LinearCost, cost,
                   cost_function_from_manifest, make_prefix_composites)
from .data import (LabeledExample, Metric, ModelManifest, ModelOutput, PredictionLog,
                   load_manifest, load_prediction_log, metric_value)

__version__ = "0.1.0"
