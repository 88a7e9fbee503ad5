"""Predict-then-act driver and regret meters.

A straightforward decision maker best-responds to each prediction as if it
were the true outcome. The meters are pure readers over transcripts:
external, swap, type, groupwise-swap, and subsequence regret, each with the
matching realized bound evaluated from the frozen bias constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import alpha_hat
from .core import EventCollection, best_response_events
from .predictor import Predictor, PredictorConfig


@dataclass
class RegretReport:
    kind: str
    values: dict
    normalizers: dict
    bound_rhs: object = None

    def overall(self):
        vals = [v for v in self.values.values() if v is not None]
        return max(vals) if vals else None

    def to_json(self):
        def clean(v):
            if isinstance(v, dict):
                return {str(k): clean(x) for k, x in v.items()}
            if v is None:
                return None
            return float(v)

        return {
            "kind": self.kind,
            "values": {str(k): clean(v) for k, v in self.values.items()},
            "normalizers": clean(self.normalizers),
            "bound_rhs": clean(self.bound_rhs),
        }


# ---------------------------------------------------------------------------
# regret meters
# ---------------------------------------------------------------------------

def _actions_and_utilities(transcript, utility):
    ps = transcript.predictions()
    ys = transcript.outcomes()
    actions = np.array([utility.best_response(p) for p in ps])
    uvals = ys @ utility.weights.T          # (T, K)
    return actions, uvals


def external_regret(transcript, utility):
    actions, uvals = _actions_and_utilities(transcript, utility)
    t = len(transcript)
    realized = uvals[np.arange(t), actions].sum()
    return float((uvals.sum(axis=0).max() - realized) / t)


def swap_regret(transcript, utility):
    """Max over all action remappings, decomposed per played action."""
    actions, uvals = _actions_and_utilities(transcript, utility)
    t = len(transcript)
    total = 0.0
    for a in range(utility.n_actions):
        rows = uvals[actions == a]
        if rows.size == 0:
            continue
        sums = rows.sum(axis=0)
        total += sums.max() - sums[a]
    return float(total / t)


def type_regret(transcript, utility, other):
    """Regret from straightforwardly optimizing ``other`` instead of one's
    own utility on the same predictions."""
    if utility.n_actions != other.n_actions:
        raise ValueError("type regret requires a shared action set")
    ps = transcript.predictions()
    ys = transcript.outcomes()
    t = len(transcript)
    own = np.array([utility.best_response(p) for p in ps])
    alt = np.array([other.best_response(p) for p in ps])
    uvals = ys @ utility.weights.T
    idx = np.arange(t)
    return float((uvals[idx, alt] - uvals[idx, own]).sum() / t)


def group_swap_regret(transcript, utility, groups):
    """Swap regret restricted to (possibly fractional, overlapping) groups.

    groups: mapping name -> G(x) in [0, 1]. Groups with zero total weight are
    reported as absent (None).
    """
    actions, uvals = _actions_and_utilities(transcript, utility)
    xs = transcript.contexts()
    out = {}
    weights_out = {}
    for name, fn in groups.items():
        w = np.array([float(fn(x)) for x in xs])
        t_g = w.sum()
        weights_out[name] = float(t_g)
        if t_g <= 0:
            out[name] = None
            continue
        total = 0.0
        for a in range(utility.n_actions):
            mask = actions == a
            if not mask.any():
                continue
            sums = (w[mask, None] * uvals[mask]).sum(axis=0)
            total += sums.max() - sums[a]
        out[name] = float(total / t_g)
    return out, weights_out


def subsequence_regret(transcript, utility, event_values=None):
    """Unnormalized per-(event, comparator action) sums
    sum_t E_t * (u(b, y_t) - u(a_t, y_t))."""
    actions, uvals = _actions_and_utilities(transcript, utility)
    t = len(transcript)
    ev = transcript.event_matrix() if event_values is None else \
        np.asarray(event_values, dtype=float)
    realized = uvals[np.arange(t), actions]
    out = {}
    for e in range(ev.shape[1]):
        w = ev[:, e]
        gains = w @ uvals          # (K,) weighted comparator totals
        base = float(w @ realized)
        for b in range(utility.n_actions):
            out[(e, b)] = float(gains[b] - base)
    return out


# ---------------------------------------------------------------------------
# predict-then-act
# ---------------------------------------------------------------------------

@dataclass
class PredictThenActResult:
    transcript: object
    events: EventCollection
    reports: dict = field(default_factory=dict)
    predictor: object = None


def combined_decision_events(utilities, extra_events=None):
    """Best-response events for every utility, plus any extra conditioning
    events. Disjointness survives only for a single utility alone."""
    collections = [best_response_events(u) for u in utilities]
    if len(collections) == 1 and not extra_events:
        return collections[0]
    events = [e for coll in collections for e in coll]
    if extra_events:
        events.extend(extra_events)
    return EventCollection(events, disjoint=False)


def predict_then_act(space, utilities, adversary, t_rounds, extra_events=None,
                     groups=None, seed=0, solver="auto", t_max=None,
                     predictor_overrides=None):
    """Run the prediction loop with best-response events for every utility;
    each straightforward decision maker plays its best response to p_t.

    Returns transcripts plus per-utility regret reports (swap and type; and
    groupwise swap when groups are supplied).
    """
    if not utilities:
        raise ValueError("need at least one utility")
    events = combined_decision_events(utilities, extra_events)
    cfg_kwargs = dict(predictor_overrides or {})
    cfg = PredictorConfig(space, events, solver=solver, seed=seed,
                          t_max=t_max or max(10 ** 8, t_rounds),
                          **cfg_kwargs)
    pred = Predictor(cfg)
    for t in range(1, t_rounds + 1):
        x = adversary.context(t, pred.transcript)
        _, p = pred.step(x)
        y = adversary.outcome(t, pred.transcript, x, p)
        pred.ingest_outcome(y)

    result = PredictThenActResult(pred.transcript, events, predictor=pred)
    t_max_used = cfg.t_max
    scale = space.scale
    n_events = len(events)
    offset = 0
    for u in utilities:
        n_by_action = [pred.transcript.frequency(offset + a)
                       for a in range(u.n_actions)]
        bound = 2 * u.lipschitz / t_rounds / scale * sum(
            alpha_hat(n, space.dim, n_events, t_max_used)
            for n in n_by_action)
        reports = {
            "swap": RegretReport(
                kind="swap",
                values={"swap": swap_regret(pred.transcript, u)},
                normalizers={"T": t_rounds},
                bound_rhs=bound),
            "type": RegretReport(
                kind="type",
                values={other.name: type_regret(pred.transcript, u, other)
                        for other in utilities if other is not u},
                normalizers={"T": t_rounds}),
        }
        if groups:
            vals, weights = group_swap_regret(pred.transcript, u, groups)
            reports["group_swap"] = RegretReport(
                kind="group_swap", values=vals,
                normalizers={"T_G": weights})
        result.reports[u.name] = reports
        offset += u.n_actions
    return result


class FunctionAdversary:
    """Adversary from plain callables (context optional)."""

    def __init__(self, outcome_fn, context_fn=None):
        self.outcome_fn = outcome_fn
        self.context_fn = context_fn

    def context(self, t, prefix):
        return None if self.context_fn is None else self.context_fn(t, prefix)

    def outcome(self, t, prefix, x, p):
        return self.outcome_fn(t, prefix, x, p)
