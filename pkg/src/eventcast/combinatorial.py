"""Online combinatorial optimization with subsequence regret.

Base actions with a linear-utility decision maker choosing feasible subsets
through a linear-optimization oracle. Conditioning on the events "base
action b is in the chosen set AND E fires" (one per base action and event)
yields no regret to every feasible set on every event subsequence, with the
comparator itself computed through the oracle rather than by enumeration.

Ships a DAG s-t path instance: base actions are edges, the oracle is a
topological-order dynamic program (signed gains are fine on a DAG).
"""

from __future__ import annotations

import csv

from dataclasses import dataclass, field
from graphlib import TopologicalSorter
from typing import Callable, Optional

import numpy as np

from .calibration import alpha_hat
from .core import Event, EventCollection, PredictionSpace
from .predictor import Predictor, PredictorConfig


@dataclass
class FeasibleSetFamily:
    """Base action set plus a linear-optimization oracle over feasible
    subsets. The oracle returns the indicator vector of an optimal set."""

    n_base: int
    feasible_opt: Callable
    enumerate_sets: Optional[Callable] = None
    validate: Optional[Callable] = None
    _memo: tuple = None

    def decision(self, w):
        w = np.asarray(w, dtype=float)
        key = w.tobytes()
        if self._memo is not None and self._memo[0] == key:
            return self._memo[1]
        s = np.asarray(self.feasible_opt(w))
        if s.shape != (self.n_base,) or not np.isin(s, (0, 1)).all():
            raise ValueError("oracle must return a 0/1 indicator over base "
                             "actions")
        if self.validate is not None and not self.validate(s):
            raise ValueError("oracle returned an infeasible set")
        s = s.astype(float)
        object.__setattr__(self, "_memo", (key, s))
        return s

    def utility(self, s, y):
        return float(np.asarray(s) @ np.asarray(y))


# ---------------------------------------------------------------------------
# DAG s-t paths
# ---------------------------------------------------------------------------

@dataclass
class DagPaths:
    """s-t paths in a DAG, edges as base actions."""

    n_nodes: int
    edges: list            # (u, v) per edge id
    source: int
    sink: int
    _order: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        graph = {v: set() for v in range(self.n_nodes)}
        for u, v in self.edges:
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise ValueError("edge endpoint out of range")
            graph[v].add(u)
        self._order = list(TopologicalSorter(graph).static_order())
        self._incoming = {v: [] for v in range(self.n_nodes)}
        for idx, (u, v) in enumerate(self.edges):
            self._incoming[v].append((u, idx))

    @property
    def n_edges(self):
        return len(self.edges)

    def best_path(self, w):
        """Maximum-total-gain s-t path; ties prefer the smaller edge id."""
        w = np.asarray(w, dtype=float)
        score = {self.source: 0.0}
        back = {}
        for v in self._order:
            if v == self.source:
                continue
            best = None
            for u, idx in self._incoming[v]:
                if u not in score:
                    continue
                cand = score[u] + w[idx]
                if best is None or cand > best[0] + 1e-15:
                    best = (cand, idx, u)
            if best is not None:
                score[v] = best[0]
                back[v] = (best[1], best[2])
        if self.sink not in score:
            raise ValueError("sink unreachable from source")
        s = np.zeros(self.n_edges)
        v = self.sink
        while v != self.source:
            idx, u = back[v]
            s[idx] = 1.0
            v = u
        return s

    def enumerate_paths(self):
        """All s-t paths as edge indicators (for brute-force checks)."""
        out = []

        def walk(v, used):
            if v == self.sink:
                s = np.zeros(self.n_edges)
                s[list(used)] = 1.0
                out.append(s)
                return
            for idx, (u, w) in enumerate(self.edges):
                if u == v:
                    walk(w, used + [idx])

        walk(self.source, [])
        return out

    def is_path(self, s):
        chosen = [i for i in range(self.n_edges) if s[i] > 0.5]
        v = self.source
        remaining = set(chosen)
        while v != self.sink:
            nxt = [i for i in remaining if self.edges[i][0] == v]
            if len(nxt) != 1:
                return False
            v = self.edges[nxt[0]][1]
            remaining.discard(nxt[0])
        return not remaining

    def family(self):
        return FeasibleSetFamily(self.n_edges, self.best_path,
                                 enumerate_sets=self.enumerate_paths,
                                 validate=self.is_path)


def parse_dag_text(text):
    """Edge-list format: header ``n m src dst``; then ``u v edge_id`` lines."""
    lines = [ln.split("#")[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty DAG description")
    head = lines[0].split()
    if len(head) != 4:
        raise ValueError("header must be 'n m src dst'")
    n, m, src, dst = (int(v) for v in head)
    edges = [None] * m
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"bad edge line: {ln!r}")
        u, v, idx = (int(x) for x in parts)
        if not 0 <= idx < m or edges[idx] is not None:
            raise ValueError(f"bad or duplicate edge id {idx}")
        edges[idx] = (u, v)
    if any(e is None for e in edges):
        raise ValueError("missing edge ids")
    return DagPaths(n, edges, src, dst)


def load_dag(path):
    with open(path) as fh:
        return parse_dag_text(fh.read())


def iter_gain_rows(path, n_base):
    """Gains streamed as CSV rows of n reals."""
    with open(path, newline="") as fh:
        for row_num, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            if len(row) != n_base:
                raise ValueError(f"row {row_num}: expected {n_base} gains, "
                                 f"got {len(row)}")
            yield np.array([float(v) for v in row])


# ---------------------------------------------------------------------------
# subsequence events
# ---------------------------------------------------------------------------

class InSetEvent(Event):
    """I_{b,E}: base action b is in the decision maker's chosen set and the
    paired event fires."""

    def __init__(self, family, base_action, paired):
        super().__init__(f"in[{base_action}]*{paired.id}",
                         binary=paired.binary)
        self.family = family
        self.base_action = int(base_action)
        self.paired = paired

    def __call__(self, prefix, x, p):
        s = self.family.decision(p)
        if s[self.base_action] == 0.0:
            return 0.0
        return float(self.paired(prefix, x, p))


class _SubsequenceEvaluator:
    """One oracle call per prediction shared by all I_{b,E} events."""

    def __init__(self, family, base_collection):
        self.family = family
        self.base = base_collection

    def __call__(self, prefix, x, p):
        return self.bind_round(prefix, x)(p)

    def bind_round(self, prefix, x):
        base_ev = self.base.bind_round(prefix, x)

        def ev(p):
            base = base_ev(p)
            s = self.family.decision(p)
            return np.concatenate([base, np.outer(base, s).ravel()])

        return ev


def build_subsequence_events(family, base_events):
    """The original events plus I_{b,E} for every base action and event."""
    if len(base_events) < 1:
        raise ValueError("need at least one base event")
    base = list(base_events)
    base_collection = base_events if isinstance(base_events, EventCollection) \
        else EventCollection(base)
    events = list(base)
    for e in base:
        for b in range(family.n_base):
            events.append(InSetEvent(family, b, e))
    return EventCollection(
        events, disjoint=False,
        evaluator=_SubsequenceEvaluator(family, base_collection))


# ---------------------------------------------------------------------------
# end-to-end runner and the subsequence regret meter
# ---------------------------------------------------------------------------

@dataclass
class CombinatorialResult:
    transcript: object
    decisions: np.ndarray
    regrets: dict            # event id -> unnormalized subsequence regret
    bound_rhs: dict          # event id -> realized Thm-style bound (sum form)
    predictor: object = None

    @property
    def max_regret(self):
        return max(self.regrets.values()) if self.regrets else 0.0


def oracle_subsequence_regret(family, decisions, outcomes, event_values):
    """Per-event max over all feasible comparators, via the oracle on the
    event-restricted cumulative gain vector."""
    decisions = np.asarray(decisions, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    ev = np.asarray(event_values, dtype=float)
    out = {}
    for e in range(ev.shape[1]):
        g = ev[:, e] @ outcomes                     # cumulative gains on E
        best = float(family.decision(g) @ g)
        realized = float(np.einsum("t,td,td->", ev[:, e], decisions, outcomes))
        out[e] = best - realized
    return out


def run_combinatorial(family, base_events, adversary, t_rounds, seed=0,
                      t_max=None, predictor_overrides=None):
    """Predict base-action gains, act through the oracle, and report
    subsequence regret over all feasible comparators."""
    n = family.n_base
    space = PredictionSpace.box(-np.ones(n), np.ones(n))
    events = build_subsequence_events(family, base_events)
    cfg = PredictorConfig(space, events, solver="ftpl", seed=seed,
                          t_max=t_max or max(10 ** 8, t_rounds),
                          **(predictor_overrides or {}))
    pred = Predictor(cfg)
    decisions = []
    for t in range(1, t_rounds + 1):
        x = adversary.context(t, pred.transcript)
        _, p = pred.step(x)
        decisions.append(family.decision(p))
        y = adversary.outcome(t, pred.transcript, x, p)
        pred.ingest_outcome(y)
    decisions = np.array(decisions)
    tr = pred.transcript
    ev_all = tr.event_matrix()
    n_base_events = len(base_events)
    regs = oracle_subsequence_regret(family, decisions, tr.outcomes(),
                                     ev_all[:, :n_base_events])
    regrets, bounds = {}, {}
    for e_idx, e in enumerate(base_events):
        regrets[e.id] = regs[e_idx]
        n_e = tr.frequency(e_idx)
        total = 0.0
        for b in range(n):
            i_idx = n_base_events + e_idx * n + b
            total += alpha_hat(n_e, n, len(events), cfg.t_max) + \
                alpha_hat(tr.frequency(i_idx), n, len(events), cfg.t_max)
        bounds[e.id] = total / space.scale
    return CombinatorialResult(tr, decisions, regrets, bounds, predictor=pred)


def brute_force_subsequence_regret(family, decisions, outcomes, event_values):
    """Exhaustive comparator search; only for small instances."""
    if family.enumerate_sets is None:
        raise ValueError("family does not support enumeration")
    sets = family.enumerate_sets()
    decisions = np.asarray(decisions, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    ev = np.asarray(event_values, dtype=float)
    out = {}
    for e in range(ev.shape[1]):
        g = ev[:, e] @ outcomes
        best = max(float(np.asarray(s) @ g) for s in sets)
        realized = float(np.einsum("t,td,td->", ev[:, e], decisions, outcomes))
        out[e] = best - realized
    return out
