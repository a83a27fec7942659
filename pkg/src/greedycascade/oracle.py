"""Exhaustive reference solvers and randomized property suites for the greedy cascade.

Everything here works on small explicit instances: each model is given as a
fixed set of examples it answers, so the checks do not depend on accuracy
models or thresholds.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .cascade import AlwaysTrue, CascadeFailure, FixedGenerator, greedy_cascade
from .cost import LinearCost
from .data import SOURCE, PredictionLog

MAX_MODELS = 8
MAX_EXAMPLES = 12


class InstanceTooLargeError(ValueError):
    pass


class TableModel:
    """Abstaining model defined only by the set of examples it answers (predicting class 0)."""

    provenance = "table"

    def __init__(self, model_id: str, answers: Iterable[str]):
        self.model_id = model_id
        self.answers = frozenset(answers)

    @property
    def key(self) -> str:
        return self.model_id

    @property
    def computes(self):
        return (self.model_id,)

    def predict(self, log):
        answered = np.fromiter((e in self.answers for e in log.example_ids), dtype=bool,
                               count=len(log))
        return np.zeros(len(log), dtype=np.int64), answered

    def marginal_cost(self, cf, computed):
        return cf.cost(self.model_id, computed)

    def to_dict(self):
        raise TypeError("table models are test fixtures and are not serialisable")

    def __repr__(self):
        return f"TableModel({self.model_id!r}, {sorted(self.answers)})"


def table_log(examples: Iterable[str]) -> PredictionLog:
    """A log with the given example ids (all labelled 0) and no models."""
    ids = list(examples)
    return PredictionLog(ids, [0] * len(ids))


def greedy_on_table(R: Sequence[str], models: Mapping[str, Iterable[str]], cf, ac=None):
    """Run :func:`greedy_cascade` on an answered-set table."""
    log = table_log(R)
    gen = FixedGenerator([TableModel(m, a) for m, a in models.items()])
    return greedy_cascade(R, ac or AlwaysTrue(), cf, gen, log)


# -- sequence costs, written directly from the definitions ----------------------------

def c_sigma(sequence: Sequence[str], cf):
    """Cost of computing every stage of ``sequence``."""
    total = 0
    for i, m in enumerate(sequence):
        total += cf.cost(m, set(sequence[:i]))
    return total


def tau(x, sequence: Sequence[str], models: Mapping[str, frozenset], cf):
    """Cost paid on ``x``: stage costs of every stage reached before (and including) the answer."""
    total = 0
    for i, m in enumerate(sequence):
        total += cf.cost(m, set(sequence[:i]))
        if x in models[m]:
            break
    return total


def sequence_total_cost(sequence: Sequence[str], R: Iterable, models: Mapping[str, frozenset], cf):
    return sum((tau(x, sequence, models, cf) for x in R), 0)


def answered_by(sequence: Iterable[str], R: Iterable, models: Mapping[str, frozenset]) -> set:
    R = set(R)
    out = set()
    for m in sequence:
        out |= models[m] & R
    return out


def enumerate_sequences(R: Iterable, models: Mapping[str, frozenset]):
    """Every non-empty sequence of distinct models in which each stage answers a new example."""
    R = frozenset(R)
    ids = sorted(models)

    def extend(prefix, covered):
        for m in ids:
            if m in prefix:
                continue
            new = (models[m] & R) - covered
            if not new:
                continue
            seq = prefix + (m,)
            yield seq
            yield from extend(seq, covered | new)

    yield from extend((), frozenset())


def brute_force_opt(R: Iterable, models: Mapping[str, Iterable], cf,
                    ac: Callable[[str, frozenset], bool] | None = None,
                    max_models: int = MAX_MODELS, max_examples: int = MAX_EXAMPLES):
    """Minimum total cost over sequences of distinct, productive models.

    Restricting to such sequences loses nothing when answered sets are fixed
    and ``c(m, S) <= c(m, ∅)``: re-running a model or adding one that answers
    nothing new only adds cost. ``ac(model_id, answered_slice)`` is checked on
    each stage's newly answered examples. When some sequence answers all of
    ``R`` the optimum is over such sequences; otherwise over maximal ones,
    with unanswered examples paying the whole sequence cost.

    Returns ``(best_sequence, opt)``.
    """
    R = frozenset(R)
    models = {m: frozenset(a) for m, a in models.items()}
    if len(models) > max_models or len(R) > max_examples:
        raise InstanceTooLargeError(
            f"{len(models)} models x {len(R)} examples exceeds {max_models} x {max_examples}")
    reachable = answered_by(models, R, models)
    best_seq, best = (), None
    for seq in enumerate_sequences(R, models):
        if ac is not None:
            covered: set = set()
            ok = True
            for m in seq:
                new = frozenset((models[m] & R) - covered)
                if not ac(m, new):
                    ok = False
                    break
                covered |= new
            if not ok:
                continue
        if answered_by(seq, R, models) != reachable:
            continue
        t = sequence_total_cost(seq, R, models, cf)
        if best is None or t < best:
            best_seq, best = seq, t
    if best is None:
        return (), 0
    return best_seq, best


def max_single_model_rate(R: Iterable, models: Mapping[str, Iterable], cf):
    """Largest ``|A(m, R)| / c(m, ∅)`` over the models."""
    R = frozenset(R)
    best = 0
    for m, a in models.items():
        k = len(frozenset(a) & R)
        c = cf.cost(m, ())
        if c == 0:
            rate = math.inf if k else 0
        else:
            rate = Fraction(k) / Fraction(c)
        best = max(best, rate)
    return best


def lemma_bound_holds(sequence, R, models, cf, r=None) -> bool:
    """``|A(S, R)| <= r* · C_Σ(S)`` in exact arithmetic."""
    if r is None:
        r = max_single_model_rate(R, models, cf)
    k = len(answered_by(sequence, R, models))
    if r == math.inf:
        return True
    return Fraction(k) <= Fraction(r) * Fraction(c_sigma(sequence, cf))


def check_domination(candidate_set: Iterable[str], sequence: Sequence[str], cf,
                     answered: Mapping[str, Iterable]) -> bool:
    """Does the set cost no more from scratch than the sequence, and answer all it answers?"""
    candidate_set = list(dict.fromkeys(candidate_set))
    set_cost = sum((Fraction(cf.cost(m, ())) for m in candidate_set), Fraction(0))
    seq_cost = sum((Fraction(c) for c in _stage_costs(sequence, cf)), Fraction(0))
    if set_cost > seq_cost:
        return False
    need = set().union(*(frozenset(answered[m]) for m in sequence)) if sequence else set()
    have = set().union(*(frozenset(answered[m]) for m in candidate_set)) if candidate_set else set()
    return need <= have


def _stage_costs(sequence, cf):
    return [cf.cost(m, set(sequence[:i])) for i, m in enumerate(sequence)]


# -- min-sum set cover --------------------------------------------------------------

@dataclass
class SetCoverInstance:
    elements: list
    sets: list[tuple[str, frozenset]]

    def __post_init__(self):
        self.sets = [(sid, frozenset(members)) for sid, members in self.sets]
        covered = set().union(*(m for _, m in self.sets)) if self.sets else set()
        missing = [e for e in self.elements if e not in covered]
        if missing:
            raise ValueError(f"elements {missing} belong to no set")


def reduce_mssc(instance: SetCoverInstance):
    """Cascade instance equivalent to a min-sum set cover instance.

    Each element becomes an example, each set a model answering exactly its
    members; every model costs 1 and the accuracy constraint always holds.
    Returns ``(answered-set table, cost function, constraint)``.
    """
    table = {sid: frozenset(members) for sid, members in instance.sets}
    return table, LinearCost({sid: 1 for sid in table}), AlwaysTrue()


def mssc_cost(order: Sequence[str], instance: SetCoverInstance) -> int:
    """Sum over elements of the 1-based position of the first set covering it."""
    sets = dict(instance.sets)
    total = 0
    for e in instance.elements:
        total += next(i for i, s in enumerate(order, 1) if e in sets[s])
    return total


def mssc_exhaustive(instance: SetCoverInstance) -> int:
    ids = [sid for sid, _ in instance.sets]
    return min(mssc_cost(p, instance) for p in itertools.permutations(ids))


def mssc_greedy(instance: SetCoverInstance) -> tuple[list[str], int]:
    """Classical greedy: pick the set covering most uncovered elements (ties: smallest id)."""
    uncovered = set(instance.elements)
    order = []
    while uncovered:
        sid = min(instance.sets, key=lambda s: (-len(s[1] & uncovered), s[0]))[0]
        order.append(sid)
        uncovered -= dict(instance.sets)[sid]
    return order, mssc_cost(order, instance)


# -- other independent oracles ------------------------------------------------------

def path_enumeration_cost(edges, sources: Iterable[str], target: str):
    """Cheapest simple path from any source to ``target``, by enumerating every simple path."""
    adj: dict[str, list] = {}
    for u, v, w in edges:
        adj.setdefault(u, []).append((v, w))
    best = math.inf
    sources = set(sources)
    if target in sources:
        return 0

    def walk(u, visited, dist):
        nonlocal best
        if u == target:
            best = min(best, dist)
            return
        for v, w in adj.get(u, ()):
            if v not in visited:
                walk(v, visited | {v}, dist + w)

    for s in sources:
        walk(s, {s}, 0)
    return best


def monotone_lsq_grid(x, y, step: float = 1e-3, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Non-decreasing least-squares fit with every value restricted to a grid.

    Exhaustive over all monotone grid vectors via dynamic programming on
    (point, grid value); points with equal ``x`` share one value.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    xs = np.unique(x)
    groups = [y[x == v] for v in xs]
    best = np.zeros_like(grid)
    choice = []
    for g in groups:
        cost = ((g[:, None] - grid[None, :]) ** 2).sum(axis=0)
        run = np.minimum.accumulate(best)
        arg = np.zeros(len(grid), dtype=np.int64)
        cur = 0
        for j in range(len(grid)):
            if best[j] < best[cur]:
                cur = j
            arg[j] = cur
        choice.append(arg)
        best = run + cost
    fitted = np.empty(len(xs))
    j = int(np.argmin(best))
    for i in range(len(xs) - 1, -1, -1):
        fitted[i] = grid[j]
        j = choice[i][j]
    return fitted[np.searchsorted(xs, x)]


# -- random instances -----------------------------------------------------------------

def random_table_instance(rng: random.Random, max_models: int = 6, max_examples: int = 10,
                          cost_range=(Fraction(1, 10), Fraction(10)), coverable: bool = True):
    """Random answered-set table with rational linear costs (in hundredths)."""
    n = rng.randint(1, max_examples)
    k = rng.randint(1, max_models)
    R = [f"x{i}" for i in range(n)]
    models = {}
    for j in range(k):
        p = rng.random()
        models[f"m{j}"] = frozenset(x for x in R if rng.random() < p)
    if coverable:
        for x in R:
            if not any(x in a for a in models.values()):
                m = f"m{rng.randrange(k)}"
                models[m] = models[m] | {x}
    lo, hi = (int(c * 100) for c in cost_range)
    costs = {m: Fraction(rng.randint(lo, hi), 100) for m in models}
    return R, models, LinearCost(costs)


def random_cover_instance(rng: random.Random, max_sets: int = 5,
                          max_elements: int = 8) -> SetCoverInstance:
    n = rng.randint(1, max_elements)
    k = rng.randint(1, max_sets)
    elements = [f"e{i}" for i in range(n)]
    sets = [[f"Z{j}", set()] for j in range(k)]
    for e in elements:
        sets[rng.randrange(k)][1].add(e)
        for s in sets:
            if rng.random() < 0.3:
                s[1].add(e)
    return SetCoverInstance(elements, [(sid, frozenset(m)) for sid, m in sets])


def random_graph_edges(rng: random.Random, max_vertices: int = 8, weight_hi: int = 20):
    """Random digraph over ``SOURCE`` and up to ``max_vertices - 1`` models, all reachable."""
    k = rng.randint(1, max_vertices - 1)
    ids = [f"m{i}" for i in range(k)]
    edges = [(SOURCE, m, rng.randint(0, weight_hi)) for m in ids]
    for u in ids:
        for v in ids:
            if u != v and rng.random() < 0.35:
                edges.append((u, v, rng.randint(0, weight_hi)))
    return ids, edges


# -- property suites ------------------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    trials: int = 0
    violations: list = field(default_factory=list)
    worst: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.violations


def approximation_suite(trials: int = 1000, seed: int = 0) -> tuple[SuiteResult, SuiteResult]:
    """Greedy total cost vs exhaustive optimum, plus the single-model rate bound.

    Returns ``(ratio result, rate-bound result)``; ``worst`` of the first is the
    largest observed ``T(greedy) / OPT``.
    """
    ratio = SuiteResult("greedy <= 4 * OPT")
    rate = SuiteResult("|A(S,R)| <= r* * C_sigma(S)")
    for t in range(trials):
        trial_seed = seed * 1_000_003 + t
        rng = random.Random(trial_seed)
        R, models, cf = random_table_instance(rng)
        trace = greedy_on_table(R, models, cf)
        _, opt = brute_force_opt(R, models, cf)
        ratio.trials += 1
        if isinstance(trace, CascadeFailure):
            ratio.violations.append((trial_seed, "greedy failed"))
            continue
        g = trace.total_cost
        r = float(Fraction(g) / Fraction(opt)) if opt else (1.0 if g == 0 else math.inf)
        ratio.worst = max(ratio.worst, r)
        if Fraction(g) > 4 * Fraction(opt):
            ratio.violations.append((trial_seed, f"T={g} OPT={opt}"))
        rate.trials += 1
        r_star = max_single_model_rate(R, models, cf)
        for seq in enumerate_sequences(R, models):
            if not lemma_bound_holds(seq, R, models, cf, r_star):
                rate.violations.append((trial_seed, seq))
                break
    return ratio, rate


def mssc_suite(trials: int = 200, seed: int = 0) -> SuiteResult:
    res = SuiteResult("MSSC reduction equivalence")
    for t in range(trials):
        trial_seed = seed * 1_000_003 + t
        inst = random_cover_instance(random.Random(trial_seed))
        table, cf, ac = reduce_mssc(inst)
        trace = greedy_on_table(inst.elements, table, cf, ac)
        _, g_val = mssc_greedy(inst)
        _, opt = brute_force_opt(inst.elements, table, cf)
        res.trials += 1
        if isinstance(trace, CascadeFailure) or trace.total_cost != g_val:
            res.violations.append((trial_seed, "greedy mismatch"))
        elif opt != mssc_exhaustive(inst):
            res.violations.append((trial_seed, "optimum mismatch"))
    return res


def domination_suite(trials: int = 200, seed: int = 0) -> SuiteResult:
    """Under linear costs every repeat-free sequence is dominated by its own set."""
    res = SuiteResult("set(S) dominates S (linear cost)")
    for t in range(trials):
        trial_seed = seed * 1_000_003 + t
        rng = random.Random(trial_seed)
        R, models, cf = random_table_instance(rng)
        ids = sorted(models)
        rng.shuffle(ids)
        seq = ids[:rng.randint(1, len(ids))]
        res.trials += 1
        if not check_domination(set(seq), seq, cf, models):
            res.violations.append((trial_seed, seq))
    return res


def run_property_suites(trials: int = 1000, seed: int = 0) -> list[SuiteResult]:
    ratio, rate = approximation_suite(trials, seed)
    small = max(trials // 5, min(trials, 200))
    return [ratio, rate, mssc_suite(small, seed), domination_suite(small, seed)]
