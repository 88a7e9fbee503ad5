"""Score-free prediction sets with transparent coverage.

Class-probability predictions made unbiased conditional on label-inclusion
events of downstream prediction set algorithms (plus optional set-size,
group, booster, and level-set products) give those algorithms the same
coverage they would enjoy were the probabilities the truth, and support
best-in-class guarantees against competing predictors under Bregman losses.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np

from .core import Event, EventCollection

LOG_LOSS_FLOOR = 1e-4


# ---------------------------------------------------------------------------
# prediction set algorithms
# ---------------------------------------------------------------------------

class PredictionSetAlgorithm:
    """Maps (history, context, class probabilities) to per-label inclusion
    probabilities in [0, 1]^k."""

    name = "S"
    deterministic = False

    def __call__(self, prefix, x, p):
        raise NotImplementedError


class SortedAspiringSets(PredictionSetAlgorithm):
    """Greedy sorted sets with the last label included fractionally so the
    anticipated coverage is exactly the target on every round."""

    def __init__(self, alpha, name=None):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.alpha = float(alpha)
        self.name = name or f"sorted[{alpha:g}]"
        self.deterministic = False

    def __call__(self, prefix, x, p):
        p = np.asarray(p, dtype=float)
        target = 1.0 - self.alpha
        incl = np.zeros(p.size)
        if target <= 0.0:
            return incl
        order = np.argsort(-p, kind="stable")  # ties by label index
        acc = 0.0
        for idx in order:
            remaining = target - acc
            if remaining <= 1e-12:
                break
            if p[idx] <= remaining:
                incl[idx] = 1.0
                acc += p[idx]
            else:
                incl[idx] = remaining / p[idx]
                acc = target
                break
        return incl


def default_set_size(inclusion):
    """Integer size of a (possibly fractional) inclusion vector."""
    return int(math.ceil(float(np.sum(inclusion)) - 1e-9))


# ---------------------------------------------------------------------------
# conditioning events
# ---------------------------------------------------------------------------

class LabelInclusionEvent(Event):
    """E_{S,y}: probability that algorithm S includes label y."""

    def __init__(self, algorithm, label):
        super().__init__(f"incl[{algorithm.name}|y={label}]",
                         binary=algorithm.deterministic)
        self.algorithm = algorithm
        self.label = int(label)

    def __call__(self, prefix, x, p):
        return float(self.algorithm(prefix, x, p)[self.label])


class SetSizeProductEvent(Event):
    """E_{S,y} * 1[size of S's set equals n]."""

    def __init__(self, algorithm, label, size_fn, size):
        super().__init__(f"incl[{algorithm.name}|y={label}]*sz={size}",
                         binary=algorithm.deterministic)
        self.algorithm = algorithm
        self.label = int(label)
        self.size_fn = size_fn
        self.size = int(size)

    def __call__(self, prefix, x, p):
        vec = self.algorithm(prefix, x, p)
        if self.size_fn(vec) != self.size:
            return 0.0
        return float(vec[self.label])


class WeightedProductEvent(Event):
    """E_{S,y} * W where W is a group or booster weight."""

    def __init__(self, algorithm, label, weight, tag):
        super().__init__(f"incl[{algorithm.name}|y={label}]*{tag}",
                         binary=False)
        self.algorithm = algorithm
        self.label = int(label)
        self.weight = weight
        self.tag = tag

    def __call__(self, prefix, x, p):
        w = float(self.weight(prefix, x, p))
        if w == 0.0:
            return 0.0
        return w * float(self.algorithm(prefix, x, p)[self.label])


def level_bucket(value, delta, n_cells):
    """Right-closed cells of width delta: (a*delta, (a+1)*delta], 0 in cell 0."""
    b = int(math.ceil(value / delta - 1e-12)) - 1
    return min(max(b, 0), n_cells - 1)


def level_buckets(values, delta, n_cells):
    """Vectorized level_bucket."""
    b = np.ceil(values / delta - 1e-12).astype(int) - 1
    return np.clip(b, 0, n_cells - 1)


class LevelSetPairEvent(Event):
    """1[p_i in own cell a and q_i(p) in competitor cell b]."""

    def __init__(self, competitor_name, competitor, coord, cell_own,
                 cell_comp, delta, n_cells):
        super().__init__(
            f"ls[{competitor_name}|i={coord}|{cell_own},{cell_comp}]",
            binary=True)
        self.competitor = competitor
        self.coord = int(coord)
        self.cell_own = int(cell_own)
        self.cell_comp = int(cell_comp)
        self.delta = float(delta)
        self.n_cells = int(n_cells)

    def __call__(self, prefix, x, p):
        if level_bucket(float(p[self.coord]), self.delta, self.n_cells) \
                != self.cell_own:
            return 0.0
        q = self.competitor(prefix, x, p)
        ok = level_bucket(float(q[self.coord]), self.delta, self.n_cells) \
            == self.cell_comp
        return 1.0 if ok else 0.0


def theorem_level_delta(k, n_competitors, t_max):
    """The level-set width from the best-in-class rate analysis."""
    return math.sqrt(math.log(k * max(n_competitors, 1) * t_max)) / \
        t_max ** 0.25


@dataclass
class PredSetEventConfig:
    algorithms: list
    k: int
    set_size_fn: object = None
    n_maxsz: int = None
    groups: dict = None
    boosters: dict = None
    competitors: dict = None
    level_delta: float = None
    t_max: int = 10 ** 8


class _PredSetEvaluator:
    """Shared evaluator: one S(p) call per algorithm and one q(p) call per
    competitor, reused across all derived events."""

    def __init__(self, cfg, layout):
        self.cfg = cfg
        self.layout = layout

    def __call__(self, prefix, x, p):
        return self.bind_round(prefix, x)(p)

    def bind_round(self, prefix, x):
        cfg = self.cfg
        group_vals = None
        if cfg.groups:
            group_vals = {name: float(fn(x)) for name, fn in cfg.groups.items()}

        def ev(p):
            vecs = {s.name: np.asarray(s(prefix, x, p), dtype=float)
                    for s in cfg.algorithms}
            out = []
            for s in cfg.algorithms:
                out.append(vecs[s.name])
            if cfg.set_size_fn is not None:
                for s in cfg.algorithms:
                    vec = vecs[s.name]
                    size = cfg.set_size_fn(vec)
                    block = np.zeros((cfg.k, cfg.n_maxsz + 1))
                    if 0 <= size <= cfg.n_maxsz:
                        block[:, size] = vec
                    out.append(block.ravel())
            if cfg.groups:
                for s in cfg.algorithms:
                    for name in cfg.groups:
                        out.append(group_vals[name] * vecs[s.name])
            if cfg.boosters:
                for s in cfg.algorithms:
                    for name, fn in cfg.boosters.items():
                        out.append(float(fn(prefix, x, p)) * vecs[s.name])
            if cfg.competitors:
                delta = self.layout["delta"]
                n_cells = self.layout["n_cells"]
                own = level_buckets(np.asarray(p, dtype=float), delta,
                                    n_cells)
                idx = np.arange(cfg.k)
                for name, q in cfg.competitors.items():
                    qv = np.asarray(q(prefix, x, p), dtype=float)
                    qc = level_buckets(qv, delta, n_cells)
                    block = np.zeros((cfg.k, n_cells, n_cells))
                    block[idx, own, qc] = 1.0
                    out.append(block.ravel())
            return np.concatenate(out)

        return ev


def build_event_collection(cfg):
    """Assemble the conditioning events for a prediction-set run.

    Per algorithm S: label-inclusion events E_{S,y}; optional products with
    set-size indicators, group weights, boosters; optional level-set pair
    events per competitor, coordinate, and cell pair.
    """
    if cfg.k < 2:
        raise ValueError("need at least two labels")
    events = []
    for s in cfg.algorithms:
        events.extend(LabelInclusionEvent(s, y) for y in range(cfg.k))
    if cfg.set_size_fn is not None:
        if cfg.n_maxsz is None:
            raise ValueError("set-size events need n_maxsz")
        for s in cfg.algorithms:
            for y in range(cfg.k):
                events.extend(SetSizeProductEvent(s, y, cfg.set_size_fn, n)
                              for n in range(cfg.n_maxsz + 1))
    if cfg.groups:
        for s in cfg.algorithms:
            for y in range(cfg.k):
                for name, fn in cfg.groups.items():
                    events.append(WeightedProductEvent(
                        s, y, _ContextWeight(fn), f"G[{name}]"))
    if cfg.boosters:
        for s in cfg.algorithms:
            for y in range(cfg.k):
                for name, fn in cfg.boosters.items():
                    events.append(WeightedProductEvent(s, y, fn, f"B[{name}]"))
    layout = {}
    if cfg.competitors:
        delta = cfg.level_delta
        if delta is None:
            delta = theorem_level_delta(cfg.k, len(cfg.competitors), cfg.t_max)
        if not 0 < delta <= 1:
            raise ValueError("level-set width must lie in (0, 1]")
        n_cells = math.ceil(1.0 / delta)
        layout = {"delta": delta, "n_cells": n_cells}
        for name, q in cfg.competitors.items():
            for i in range(cfg.k):
                for a in range(n_cells):
                    for b in range(n_cells):
                        events.append(LevelSetPairEvent(
                            name, q, i, a, b, delta, n_cells))
    return EventCollection(events, disjoint=False,
                           evaluator=_PredSetEvaluator(cfg, layout))


class _ContextWeight:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, prefix, x, p):
        return float(self.fn(x))


# ---------------------------------------------------------------------------
# coverage accounting
# ---------------------------------------------------------------------------

@dataclass
class _Cell:
    realized: np.ndarray
    anticipated: np.ndarray
    weight: float = 0.0


class CoverageLedger:
    """Per-(algorithm, conditioning) accumulators of realized and anticipated
    per-label coverage mass."""

    def __init__(self, k, algorithm_names, conditions=("marginal",)):
        self.k = int(k)
        self.names = list(algorithm_names)
        self.cells = {(s, c): _Cell(np.zeros(k), np.zeros(k))
                      for s in self.names for c in conditions}
        self.rounds = 0

    def conditions(self):
        return sorted({c for _, c in self.cells})

    def update(self, p, label, inclusion_by_alg, weights=None):
        """Record one round: p are our class probabilities, label the realized
        label index, inclusion_by_alg {name: vector}, weights {condition:
        W(t)} (marginal weight is implicitly 1)."""
        p = np.asarray(p, dtype=float)
        weights = dict(weights or {})
        weights.setdefault("marginal", 1.0)
        for s, vec in inclusion_by_alg.items():
            vec = np.asarray(vec, dtype=float)
            for cond, w in weights.items():
                key = (s, cond)
                if key not in self.cells:
                    self.cells[key] = _Cell(np.zeros(self.k), np.zeros(self.k))
                if w == 0.0:
                    continue
                cell = self.cells[key]
                cell.realized[label] += w * vec[label]
                cell.anticipated += w * p * vec
                cell.weight += w
        self.rounds += 1

    def per_label(self, algorithm, condition="marginal"):
        cell = self.cells[(algorithm, condition)]
        if cell.weight <= 0:
            return None
        return {
            "realized": cell.realized / cell.weight,
            "anticipated": cell.anticipated / cell.weight,
            "weight_total": cell.weight,
        }


def coverage_report(ledger, algorithm, condition="marginal"):
    """Time-averaged realized and anticipated coverage on the conditioned
    subsequence; None when the conditioning never fired."""
    data = ledger.per_label(algorithm, condition)
    if data is None:
        return None
    realized = float(data["realized"].sum())
    anticipated = float(data["anticipated"].sum())
    return {
        "realized": realized,
        "anticipated": anticipated,
        "gap": abs(realized - anticipated),
        "weight_total": float(data["weight_total"]),
    }


# ---------------------------------------------------------------------------
# Bregman scores
# ---------------------------------------------------------------------------

@dataclass
class BregmanScore:
    """Scoring rule whose excess expected score over truth-telling is a
    Bregman divergence."""

    name: str
    f: object
    f_prime: object

    def divergence(self, p1, p2):
        p1 = np.asarray(p1, dtype=float)
        p2 = np.asarray(p2, dtype=float)
        return float(np.sum(self.f(p1) - self.f(p2)
                            - self.f_prime(p2) * (p1 - p2)))

    def score(self, p, label):
        """phi(p, e_label): divergence from the one-hot outcome."""
        e = np.zeros(np.asarray(p).shape[-1])
        e[label] = 1.0
        return self.divergence(e, p)

    def expected_score(self, p1, p2):
        p2 = np.asarray(p2, dtype=float)
        return float(sum(p2[i] * self.score(p1, i) for i in range(p2.size)))

    @classmethod
    def brier(cls):
        return cls("brier", lambda v: v ** 2, lambda v: 2.0 * v)

    @classmethod
    def log(cls):
        def f(v):
            v = np.maximum(v, 1e-300)
            return v * np.log(v)

        def f_prime(v):
            return np.log(np.maximum(v, 1e-300)) + 1.0

        return cls("log", f, f_prime)

    @classmethod
    def custom(cls, f, f_prime, name="custom"):
        return cls(name, f, f_prime)


def floor_distribution(p, floor=LOG_LOSS_FLOOR):
    """Clamp coordinates to >= floor and renormalize; keeps log scores and
    their Lipschitz constants finite."""
    p = np.maximum(np.asarray(p, dtype=float), floor)
    return p / p.sum()


class CsvCompetitor:
    """Competing predictor whose per-round probability vectors come from CSV
    rows (k columns per row, consumed in round order)."""

    def __init__(self, path, k):
        import csv

        self.rows = []
        with open(path, newline="") as fh:
            for line_no, row in enumerate(csv.reader(fh), 1):
                if not row:
                    continue
                if len(row) != k:
                    raise ValueError(f"{path}: line {line_no}: expected {k} "
                                     f"columns, got {len(row)}")
                vec = np.array([float(v) for v in row])
                self.rows.append(vec / vec.sum())
        if not self.rows:
            raise ValueError(f"{path}: no competitor rows")

    def __call__(self, prefix, x, p):
        t = 0 if prefix is None else len(prefix)
        if t >= len(self.rows):
            raise ValueError("competitor CSV exhausted")
        return self.rows[t]


def load_label_stream(path, k, label_column=-1):
    """CSV label stream: context columns plus a label column; returns
    (contexts, labels)."""
    import csv

    contexts, labels = [], []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            try:
                label = int(row[label_column])
            except (ValueError, IndexError) as err:
                raise ValueError(f"{path}: line {line_no}: bad label "
                                 f"column: {err}") from err
            if not 0 <= label < k:
                raise ValueError(f"{path}: line {line_no}: label {label} "
                                 f"outside [0, {k})")
            ctx = row[:label_column] if label_column != -1 else row[:-1]
            contexts.append(tuple(ctx))
            labels.append(label)
    return contexts, labels


def bregman_loss(score, predictions, labels, floor=None):
    """Cumulative scoring-rule loss sum_t phi(pred_t, y_t)."""
    total = 0.0
    for p, y in zip(predictions, labels):
        p = np.asarray(p, dtype=float)
        if floor is not None:
            p = floor_distribution(p, floor)
        total += score.score(p, int(y))
    return float(total)
