"""Scenario runners: one function per experiment family, a seed-parallel
driver, and deterministic metric file emission."""

from __future__ import annotations

import csv
import json
import os
import time

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import __version__ as package_version
from ..calibration import alpha_hat
from ..combinatorial import parse_dag_text, run_combinatorial
from ..core import (
    AlwaysOnEvent,
    Event,
    EventCollection,
    FunctionEvent,
    GroupEvent,
    LinearUtility,
    PredictionSpace,
    best_response_events,
)
from ..decisions import swap_regret, group_swap_regret
from ..efg import (
    GameTree,
    best_response_family,
    causal_events,
    causal_regret,
    efg_subsequence_regret,
    reachability_vector,
    validate_recall,
)
from ..predictor import Predictor, PredictorConfig
from ..predsets import (
    BregmanScore,
    CoverageLedger,
    PredSetEventConfig,
    SortedAspiringSets,
    bregman_loss,
    build_event_collection,
    coverage_report,
    default_set_size,
    floor_distribution,
)
from .adversaries import make_adversary, _rng

CHECKPOINTS = 12


@dataclass
class SeedResult:
    seed: int
    summary: dict
    series: dict = field(default_factory=dict)   # column -> list


def _checkpoint_grid(t_rounds):
    lo = min(10, t_rounds)
    grid = np.unique(np.geomspace(lo, t_rounds, CHECKPOINTS).astype(int))
    return [int(t) for t in grid if t >= 1]


def _gap_summary(pred):
    gaps = np.array([g for _, _, g, _ in pred.gap_log])
    eps = np.array([e for _, e, _, _ in pred.gap_log])
    slack = np.maximum(gaps - eps, 0.0)
    return {
        "mean_gap": float(gaps.mean()),
        "max_gap": float(gaps.max()),
        "mean_slack": float(slack.mean()),
        "max_slack": float(slack.max()),
        "rounds_converged": float((slack <= 1e-12).mean()),
    }


# ---------------------------------------------------------------------------
# calibration-1d
# ---------------------------------------------------------------------------

def run_calibration_1d(cfg, seed):
    space = PredictionSpace.box([0.0], [1.0])
    events = EventCollection([AlwaysOnEvent()], disjoint=True)
    adversary = make_adversary(cfg.adversary.get("kind", "threshold"), space,
                               seed=seed, events=events,
                               params=cfg.adversary.get("params"))
    pred = Predictor(PredictorConfig(space, events, solver=cfg.solver,
                                     seed=seed, t_max=cfg.t_max,
                                     ftpl_inner_cap=cfg.ftpl_inner_cap))
    checkpoints = set(_checkpoint_grid(cfg.t_rounds))
    series = {"t": [], "bias": [], "gap": [], "eps": []}
    for t in range(1, cfg.t_rounds + 1):
        x = adversary.context(t, pred.transcript)
        _, p = pred.step(x)
        y = adversary.outcome(t, pred.transcript, x, p)
        pred.ingest_outcome(y)
        if t in checkpoints:
            series["t"].append(t)
            series["bias"].append(float(abs(pred.transcript.signed_bias[0, 0])))
            series["gap"].append(pred.gap_log[-1][2])
            series["eps"].append(pred.gap_log[-1][1])
    summary = {
        "final_abs_bias": float(abs(pred.transcript.signed_bias[0, 0])),
        "final_mean_bias": float(abs(pred.transcript.signed_bias[0, 0]))
        / cfg.t_rounds,
        "sum_sq": float(pred.transcript.sum_sq[0]),
        **_gap_summary(pred),
    }
    return SeedResult(seed, summary, series)


# ---------------------------------------------------------------------------
# experts (swap regret) and groupwise
# ---------------------------------------------------------------------------

class _ExpertsAdversaryWrapper:
    """Adapts a plain outcome generator, optionally making it adaptive.

    'leader-punish' rewards everything except the decision maker's recently
    most-played action. Per the protocol the adversary sees history but not
    the current round's realized prediction.
    """

    def __init__(self, inner, mode, n, seed, window=50):
        self.inner = inner
        self.mode = mode
        self.n = n
        self.window = window
        self.rng = _rng(seed, 0xEA)

    def context(self, t, prefix):
        return self.inner.context(t, prefix)

    def outcome(self, t, prefix, x, p):
        if self.mode == "leader-punish":
            g = self.rng.uniform(0.0, 1.0, self.n)
            target = 0
            if prefix is not None and len(prefix) > 0:
                recent = prefix.predictions()[-self.window:]
                counts = np.bincount(recent.argmax(axis=1), minlength=self.n)
                target = int(counts.argmax())
            g[target] = -self.rng.uniform(0.5, 1.0)
            return np.clip(g, -1, 1)
        return self.inner.outcome(t, prefix, x, p)


def _expert_groups(n_categories):
    # overlapping context groups over a small categorical context space
    def member(cats):
        cats = set(cats)
        return lambda x: 1.0 if x in cats else 0.0

    return {
        "g01": member({0, 1}),
        "g12": member({1, 2}),
        "g02": member({0, 2}),
    }


class _CategoricalContext:
    def __init__(self, seed, n=3):
        self.rng = _rng(seed, 0xC1)
        self.n = n

    def __call__(self):
        return int(self.rng.integers(0, self.n))


def _run_experts_like(cfg, seed, groupwise):
    params = cfg.scenario_params
    n = int(params.get("n_experts", 5))
    space = PredictionSpace.box(-np.ones(n), np.ones(n))
    u = LinearUtility(np.eye(n), name="experts")
    br = best_response_events(u)
    groups = _expert_groups(3) if groupwise else None
    if groupwise:
        events = list(br)
        for gname, fn in groups.items():
            for a in range(n):
                events.append(_GroupedBrEvent(u, a, gname, fn))
        events = EventCollection(events, disjoint=False,
                                 evaluator=_GroupedBrEvaluator(u, groups))
    else:
        events = br
    mode = params.get("stream", "iid")
    base = make_adversary(cfg.adversary.get("kind", "iid"), space, seed=seed,
                          params=cfg.adversary.get("params"))
    adversary = _ExpertsAdversaryWrapper(base, mode, n, seed)
    ctx = _CategoricalContext(seed)

    pred = Predictor(PredictorConfig(space, events, solver=cfg.solver,
                                     seed=seed, t_max=cfg.t_max,
                                     ftpl_inner_cap=cfg.ftpl_inner_cap))
    checkpoints = set(_checkpoint_grid(cfg.t_rounds))
    series = {"t": [], "swap": []}
    cum = np.zeros((n, n))    # per played action: cumulative utility rows
    for t in range(1, cfg.t_rounds + 1):
        x = ctx() if groupwise else adversary.context(t, pred.transcript)
        _, p = pred.step(x)
        a = u.best_response(p)
        y = adversary.outcome(t, pred.transcript, x, p)
        pred.ingest_outcome(y)
        cum[a] += u.values(y)
        if t in checkpoints:
            sw = sum(cum[b].max() - cum[b, b] for b in range(n)) / t
            series["t"].append(t)
            series["swap"].append(float(sw))
    tr = pred.transcript
    final_swap = swap_regret(tr, u)
    n_by_action = [tr.frequency(a) for a in range(n)]
    bound = 2 * u.lipschitz / cfg.t_rounds / space.scale * sum(
        alpha_hat(v, n, len(events), cfg.t_max) for v in n_by_action)
    summary = {
        "swap_regret": final_swap,
        "swap_bound_rhs": float(bound),
        **_gap_summary(pred),
    }
    if groupwise:
        vals, weights = group_swap_regret(tr, u, groups)
        for gname in groups:
            summary[f"group_swap[{gname}]"] = vals[gname]
            summary[f"group_weight[{gname}]"] = weights[gname]
    return SeedResult(seed, summary, series)


class _GroupedBrEvent(Event):
    def __init__(self, utility, action, gname, fn):
        super().__init__(f"br[a={action}]*G[{gname}]", binary=True)
        self.utility = utility
        self.action = action
        self.group_fn = fn

    def __call__(self, prefix, x, p):
        if self.group_fn(x) == 0.0:
            return 0.0
        return 1.0 if self.utility.best_response(p) == self.action else 0.0


class _GroupedBrEvaluator:
    def __init__(self, utility, groups):
        self.utility = utility
        self.groups = groups

    def __call__(self, prefix, x, p):
        return self.bind_round(prefix, x)(p)

    def bind_round(self, prefix, x):
        gvals = np.array([fn(x) for fn in self.groups.values()])
        n = self.utility.n_actions

        def ev(p):
            onehot = np.zeros(n)
            onehot[self.utility.best_response(p)] = 1.0
            return np.concatenate([onehot,
                                   (gvals[:, None] * onehot[None, :]).ravel()])

        return ev


def run_experts(cfg, seed):
    return _run_experts_like(cfg, seed, groupwise=False)


def run_groupwise(cfg, seed):
    return _run_experts_like(cfg, seed, groupwise=True)


# ---------------------------------------------------------------------------
# combinatorial
# ---------------------------------------------------------------------------

TWO_PATH_DAG = """
4 6 0 3
0 1 0
1 3 1
0 2 2
2 3 3
0 3 4
0 3 5
"""


class _EdgeGainAdversary:
    def __init__(self, inner, ctx):
        self.inner = inner
        self.ctx = ctx

    def context(self, t, prefix):
        return self.ctx()

    def outcome(self, t, prefix, x, p):
        return self.inner.outcome(t, prefix, x, p)


def run_combinatorial_scenario(cfg, seed):
    params = cfg.scenario_params
    dag = parse_dag_text(params.get("dag", TWO_PATH_DAG))
    fam = dag.family()
    n = fam.n_base
    space = PredictionSpace.box(-np.ones(n), np.ones(n))
    base_events = [
        AlwaysOnEvent(),
        GroupEvent("ctx0", _CategoryIndicator(0), binary=True),
        FunctionEvent("lead0", _LeadCoordinate(0), binary=True),
    ]
    inner = make_adversary(cfg.adversary.get("kind", "iid"), space, seed=seed,
                           params=cfg.adversary.get("params"))
    adversary = _EdgeGainAdversary(inner, _CategoricalContext(seed, 2))
    res = run_combinatorial(fam, base_events, adversary, cfg.t_rounds,
                            seed=seed, t_max=cfg.t_max,
                            predictor_overrides={
                                "ftpl_inner_cap": cfg.ftpl_inner_cap})
    summary = {"max_subseq_regret_per_t":
               max(res.regrets.values()) / cfg.t_rounds,
               **_gap_summary(res.predictor)}
    for eid, v in res.regrets.items():
        summary[f"subseq[{eid}]"] = v / cfg.t_rounds
        summary[f"subseq_bound[{eid}]"] = res.bound_rhs[eid] / cfg.t_rounds
        summary[f"subseq_ok[{eid}]"] = float(v <= res.bound_rhs[eid])
    return SeedResult(seed, summary)


class _CategoryIndicator:
    def __init__(self, cat):
        self.cat = cat

    def __call__(self, x):
        return 1.0 if x == self.cat else 0.0


class _LeadCoordinate:
    def __init__(self, coord):
        self.coord = coord

    def __call__(self, prefix, x, p):
        return 1.0 if p[self.coord] >= 0 else 0.0


# ---------------------------------------------------------------------------
# extensive-form games
# ---------------------------------------------------------------------------

BLIND_TRIPLE_GAME = """
game 2
node root p1 - - infoset=R
node o0 p2 root m0 infoset=O0
node o1 p2 root m1 infoset=O1
node o2 p2 root m2 infoset=O2
node b0u p1 o0 U infoset=J0
node b0d p1 o0 D infoset=J0
node b1u p1 o1 U infoset=J1
node b1d p1 o1 D infoset=J1
node b2u p1 o2 U infoset=J2
node b2d p1 o2 D infoset=J2
node z0 terminal b0u x payoffs=2,-2
node z1 terminal b0u y payoffs=-1,1
node z2 terminal b0d x payoffs=0,0
node z3 terminal b0d y payoffs=1,-1
node z4 terminal b1u x payoffs=-2,2
node z5 terminal b1u y payoffs=3,-3
node z6 terminal b1d x payoffs=1,-1
node z7 terminal b1d y payoffs=-1,1
node z8 terminal b2u x payoffs=1,-1
node z9 terminal b2u y payoffs=-2,2
node z10 terminal b2d x payoffs=-1,1
node z11 terminal b2d y payoffs=2,-2
"""


class _EfgOpponentAdversary:
    """Per-round opponent behavioral strategies with a drifting mixture."""

    def __init__(self, game, player, seed, drift_period=400):
        self.game = game
        self.player = player
        self.rng = _rng(seed, 0xEF)
        self.period = drift_period
        self.opp_infosets = [name for name in game.infosets
                             if game.infoset_owner[name] != player
                             and game.infoset_owner[name] >= 0]

    def context(self, t, prefix):
        return None

    def opponent_strategies(self, t):
        out = {}
        phase = 0.5 + 0.4 * np.sin(2 * np.pi * t / self.period)
        for name in self.opp_infosets:
            acts = self.game.infoset_actions[name]
            w = self.rng.dirichlet(np.full(len(acts), 1.0)) * 0.5
            w[0] += 0.5 * phase
            w /= w.sum()
            out[name] = dict(zip(acts, w))
        return out

    def outcome(self, t, prefix, x, p):
        return reachability_vector(self.game, self.player,
                                   self.opponent_strategies(t))


def run_efg(cfg, seed):
    params = cfg.scenario_params
    game = GameTree.from_text(params.get("game", BLIND_TRIPLE_GAME))
    player = int(params.get("player", 0))
    rep = validate_recall(game, player)
    if not (rep.perfect_recall and rep.path_recall):
        raise ValueError("scenario game must give the learner perfect and "
                         f"path recall; witnesses: {rep.witnesses}")
    fam = best_response_family(game, player)
    trig = causal_events(game, player, family=fam)
    from ..combinatorial import build_subsequence_events
    events = build_subsequence_events(fam, list(trig))
    n_z = len(game.leaves)
    lo = np.array([min(0.0, game.nodes[z].payoffs[player])
                   for z in game.leaves])
    hi = np.array([max(0.0, game.nodes[z].payoffs[player])
                   for z in game.leaves])
    space = PredictionSpace.box(lo, hi)
    adversary = _EfgOpponentAdversary(game, player, seed)
    pred = Predictor(PredictorConfig(space, events, solver="ftpl", seed=seed,
                                     t_max=cfg.t_max,
                                     ftpl_inner_cap=cfg.ftpl_inner_cap))
    strategies, outcomes = [], []
    for t in range(1, cfg.t_rounds + 1):
        x = adversary.context(t, pred.transcript)
        _, p = pred.step(x)
        strategies.append(fam.decision(p))
        y = adversary.outcome(t, pred.transcript, x, p)
        pred.ingest_outcome(y)
        outcomes.append(y)
    strategies = np.array(strategies)
    outcomes = np.array(outcomes)
    tr = pred.transcript
    n_trig = len(trig)
    c_regret = causal_regret(game, player, strategies, outcomes)
    sub = efg_subsequence_regret(game, player, strategies, outcomes,
                                 tr.event_matrix()[:, :n_trig])
    max_sub = max(sub.values())
    bounds = {}
    for e_idx in range(n_trig):
        total = 0.0
        n_e = tr.frequency(e_idx)
        for b in range(n_z):
            i_idx = n_trig + e_idx * n_z + b
            total += alpha_hat(n_e, n_z, len(events), cfg.t_max) + \
                alpha_hat(tr.frequency(i_idx), n_z, len(events), cfg.t_max)
        bounds[e_idx] = total / space.scale
    worst_bound = max(bounds.values()) / cfg.t_rounds
    summary = {
        "causal_regret_per_t": c_regret,
        "max_subseq_regret_per_t": max_sub / cfg.t_rounds,
        "containment_ok": float(c_regret <= max(max_sub, 0.0) / cfg.t_rounds
                                + 1e-9),
        "worst_subseq_bound_per_t": worst_bound,
        "bound_ok": float(max_sub / cfg.t_rounds <= worst_bound),
        **_gap_summary(pred),
    }
    return SeedResult(seed, summary)


# ---------------------------------------------------------------------------
# prediction sets
# ---------------------------------------------------------------------------

class _WorldModel:
    """Context-conditional label distributions (not revealed to the
    predictor)."""

    def __init__(self, k, n_contexts, seed, sharpness=2.0):
        rng = _rng(seed, 0x30)
        self.k = k
        self.table = rng.dirichlet(np.full(k, 1.0 / sharpness),
                                   size=n_contexts)

    def dist(self, x):
        return self.table[x % self.table.shape[0]]


class _NearOracleCompetitor:
    """World distribution plus a fixed per-context perturbation; a pure
    function of the context so event evaluations are reproducible."""

    def __init__(self, world, seed, noise=0.02):
        self.world = world
        rng = _rng(seed, 0x31)
        self.offsets = noise * rng.normal(size=world.table.shape)

    def __call__(self, prefix, x, p):
        xi = int(x) % self.world.table.shape[0]
        q = np.clip(self.world.dist(xi) + self.offsets[xi], 1e-4, None)
        return q / q.sum()


class _BiasedCompetitor:
    def __init__(self, world, k):
        self.world = world
        self.k = k

    def __call__(self, prefix, x, p):
        w = self.world.dist(0)
        return floor_distribution(w ** 0.25)


class _RandomCompetitor:
    """Fresh draw per round, keyed by the round index for reproducibility."""

    def __init__(self, k, seed):
        self.k = k
        self.seed = seed

    def __call__(self, prefix, x, p):
        t = 0 if prefix is None else len(prefix)
        return _rng(self.seed, 0x320000 + t).dirichlet(np.ones(self.k))


def run_predsets(cfg, seed):
    params = cfg.scenario_params
    k = int(params.get("k", 10))
    alphas = params.get("alphas", [0.1])
    algos = [SortedAspiringSets(a) for a in alphas]
    n_contexts = int(params.get("n_contexts", 4))
    world = _WorldModel(k, n_contexts, seed=1234)   # shared across seeds
    groups = None
    if params.get("groups"):
        groups = {f"G{j}": _ContextModGroup(j, n_contexts)
                  for j in range(int(params["groups"]))}
    competitors = None
    comp_objs = {}
    if params.get("competitors"):
        comp_objs = {
            "near_oracle": _NearOracleCompetitor(world, seed=777),
            "biased": _BiasedCompetitor(world, k),
            "random": _RandomCompetitor(k, seed=778),
        }
        competitors = comp_objs
    set_size = bool(params.get("set_size", False))
    ev_cfg = PredSetEventConfig(
        algos, k,
        set_size_fn=default_set_size if set_size else None,
        n_maxsz=k if set_size else None,
        groups=groups,
        competitors=competitors,
        t_max=cfg.t_max,
        level_delta=params.get("level_delta"),
    )
    built = build_event_collection(ev_cfg)
    # plain marginal conditioning on top of the per-label inclusion events:
    # costs one extra always-on event and measurably tightens the realized
    # marginal coverage gap
    events = EventCollection(list(built) + [AlwaysOnEvent()],
                             evaluator=_WithMarginal(built))
    space = PredictionSpace.simplex(k)
    pred = Predictor(PredictorConfig(space, events, solver="ftpl", seed=seed,
                                     t_max=cfg.t_max,
                                     ftpl_inner_cap=cfg.ftpl_inner_cap))
    conditions = ["marginal"]
    if set_size:
        conditions += [f"sz={n}" for n in range(k + 1)]
    if groups:
        conditions += [f"G[{g}]" for g in groups]
    ledger = CoverageLedger(k, [s.name for s in algos], conditions)
    label_rng = _rng(seed, 0x33)
    mode = cfg.adversary.get("kind", "iid")
    brier = BregmanScore.brier()
    log_score = BregmanScore.log()
    losses = {name: {"brier": 0.0, "log": 0.0}
              for name in ["ours", *comp_objs]}
    recent = []
    for t in range(1, cfg.t_rounds + 1):
        x = int(label_rng.integers(0, n_contexts))
        _, p = pred.step(x)
        if mode == "honest":
            y_label = int(label_rng.choice(k, p=p / p.sum()))
        elif mode == "threshold":
            # adaptive through history only: the label whose recent average
            # predicted probability is lowest
            y_label = 0 if not recent else \
                int(np.argmin(np.mean(recent[-25:], axis=0)))
        elif mode == "shift":
            # non-stationary adversarial stream: the context-conditional
            # label distributions rotate over time
            y_label = int(label_rng.choice(
                k, p=world.dist((x + t // 250) % n_contexts)))
        else:
            y_label = int(label_rng.choice(k, p=world.dist(x)))
        recent.append(p)
        if len(recent) > 25:
            recent.pop(0)
        y = np.zeros(k)
        y[y_label] = 1.0
        pred.ingest_outcome(y)
        incl = {s.name: s(None, x, p) for s in algos}
        weights = {}
        if set_size:
            for s in algos:
                weights[f"sz={default_set_size(incl[s.name])}"] = 1.0
        if groups:
            for gname, fn in groups.items():
                weights[f"G[{gname}]"] = fn(x)
        ledger.update(p, y_label, incl, weights)
        losses["ours"]["brier"] += brier.score(p, y_label)
        losses["ours"]["log"] += log_score.score(
            floor_distribution(p), y_label)
        for name, comp in comp_objs.items():
            q = floor_distribution(np.asarray(comp(None, x, p)))
            losses[name]["brier"] += brier.score(q, y_label)
            losses[name]["log"] += log_score.score(q, y_label)
    summary = {**_gap_summary(pred)}
    for s_idx, s in enumerate(algos):
        rep = coverage_report(ledger, s.name)
        summary[f"realized[{s.name}]"] = rep["realized"]
        summary[f"anticipated[{s.name}]"] = rep["anticipated"]
        summary[f"gap[{s.name}]"] = rep["gap"]
        per = ledger.per_label(s.name)
        for y in range(k):
            diff = abs(per["realized"][y] - per["anticipated"][y])
            summary[f"label_gap_T[{s.name}|{y}]"] = diff * cfg.t_rounds
            # n_T of the label-inclusion event (events are laid out
            # algorithm-major over labels)
            summary[f"label_n[{s.name}|{y}]"] = \
                pred.transcript.frequency(s_idx * k + y)
        for cond in conditions[1:]:
            crep = coverage_report(ledger, s.name, cond)
            if crep is None:
                continue
            summary[f"cov[{s.name}|{cond}]"] = crep["realized"]
            summary[f"weight[{s.name}|{cond}]"] = crep["weight_total"]
    for name, vals in losses.items():
        summary[f"brier[{name}]"] = vals["brier"]
        summary[f"log[{name}]"] = vals["log"]
    return SeedResult(seed, summary)


class _WithMarginal:
    def __init__(self, base):
        self.base = base

    def __call__(self, prefix, x, p):
        return self.bind_round(prefix, x)(p)

    def bind_round(self, prefix, x):
        inner = self.base.bind_round(prefix, x)

        def ev(p):
            return np.append(inner(p), 1.0)

        return ev


class _ContextModGroup:
    def __init__(self, j, n_contexts):
        self.j = j
        self.n = n_contexts

    def __call__(self, x):
        return 1.0 if (x + self.j) % self.n in (0, 1) else 0.0


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

RUNNERS = {
    "calibration-1d": run_calibration_1d,
    "experts": run_experts,
    "groupwise": run_groupwise,
    "combinatorial": run_combinatorial_scenario,
    "efg": run_efg,
    "predsets": run_predsets,
}


def _run_seed(cfg_dict, seed):
    from .config import ExperimentConfig
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return RUNNERS[cfg.scenario](cfg, seed)


def run_experiment(cfg, write=True):
    """Run all seeds (optionally in a worker pool), aggregate, and emit
    deterministic CSV/JSON metric files."""
    start = time.monotonic()
    cfg_dict = cfg.to_dict()
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_seed, [cfg_dict] * len(cfg.seeds),
                                    cfg.seeds))
    else:
        results = [_run_seed(cfg_dict, s) for s in cfg.seeds]
    results.sort(key=lambda r: r.seed)
    elapsed = time.monotonic() - start
    if cfg.wall_clock_budget is not None and elapsed > cfg.wall_clock_budget:
        raise RuntimeError(
            f"wall-clock budget exceeded: {elapsed:.1f}s > "
            f"{cfg.wall_clock_budget:.1f}s")
    aggregate = _aggregate(results)
    if write:
        _write_outputs(cfg, results, aggregate)
    return results, aggregate


def _aggregate(results):
    keys = sorted({k for r in results for k in r.summary})
    out = {}
    for k in keys:
        vals = [r.summary[k] for r in results
                if r.summary.get(k) is not None]
        if not vals:
            continue
        arr = np.array(vals, dtype=float)
        out[k] = {"mean": float(arr.mean()), "max": float(arr.max()),
                  "min": float(arr.min()), "n": int(arr.size)}
    return out


def _write_outputs(cfg, results, aggregate):
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "code_version": package_version,
        "gap_summary": {
            k: aggregate[k] for k in ("mean_gap", "max_gap", "mean_slack",
                                      "max_slack")
            if k in aggregate
        },
    }
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    for r in results:
        seed_dir = os.path.join(cfg.out_dir, f"seed_{r.seed}")
        os.makedirs(seed_dir, exist_ok=True)
        with open(os.path.join(seed_dir, "summary.json"), "w") as fh:
            json.dump({k: r.summary[k] for k in sorted(r.summary)}, fh,
                      sort_keys=True, indent=2)
        if r.series:
            cols = sorted(r.series)
            rows = zip(*[r.series[c] for c in cols])
            with open(os.path.join(seed_dir, "series.csv"), "w",
                      newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for row in rows:
                    w.writerow([repr(v) for v in row])
    with open(os.path.join(cfg.out_dir, "aggregate.json"), "w") as fh:
        json.dump(aggregate, fh, sort_keys=True, indent=2)
    with open(os.path.join(cfg.out_dir, "aggregate.csv"), "w",
              newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "mean", "max", "min", "n"])
        for k in sorted(aggregate):
            a = aggregate[k]
            w.writerow([k, repr(a["mean"]), repr(a["max"]), repr(a["min"]),
                        a["n"]])
