"""Outer prediction loop.

Each round: form event gains from the previous round, query the experts
subroutine for event weights, solve the round's minimax problem to accuracy
1/t with the solver matching the event structure, sample a prediction, and
ingest the adversary's outcome into the transcript.
"""

from __future__ import annotations

import pickle

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .core import (EventCollection, Transcript, n_reduction_experts,
                   reduction_gains)
from .experts import SmallLossExperts
from .minimax_disjoint import RoundGame, SolverError, solve_lp
from .minimax_ftpl import FtplConfig, solve_ftpl

SNAPSHOT_MAGIC = b"EVCAST01"


@dataclass
class PredictorConfig:
    space: object
    events: Union[EventCollection, Callable]
    solver: str = "auto"            # 'auto' | 'disjoint_lp' | 'ftpl'
    t_max: int = 10 ** 8
    seed: int = 0
    ftpl_inner_cap: Optional[int] = 20000
    ftpl_sampling: bool = False
    ftpl_sample_cap: Optional[int] = 512
    lp_iter_cap: int = 100
    record_traces: bool = False

    def events_at(self, t, prefix):
        if isinstance(self.events, EventCollection):
            return self.events
        return self.events(t, prefix)


class Predictor:
    """Streaming step/ingest pairs producing event-conditionally unbiased
    predictions. One instance per logical stream; single-threaded."""

    def __init__(self, config):
        self.config = config
        self.t = 1
        self.transcript = None
        self.experts = None
        self._pending = None
        self.gap_log = []       # (t, eps, gap, converged)
        self.traces = []
        self._last_psi = None
        self._warm_cuts = []    # adversary cuts reused across LP rounds

    # -- round-keyed randomness -------------------------------------------

    def _round_rng(self, t):
        key = np.array([self.config.seed & 0xFFFFFFFFFFFFFFFF, t],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    # -- solver dispatch ----------------------------------------------------

    def _choose_solver(self, events):
        mode = self.config.solver
        if mode == "auto":
            if events.disjoint and events.all_binary and events.all_convex:
                return "disjoint_lp"
            return "ftpl"
        if mode not in ("disjoint_lp", "ftpl"):
            raise ValueError(f"unknown solver {mode!r}")
        return mode

    def _solve_round(self, game, eps, rng):
        solver = self._choose_solver(game.events)
        if solver == "disjoint_lp":
            try:
                psi, info = solve_lp(game, eps,
                                     iter_cap=self.config.lp_iter_cap,
                                     warm_cuts=self._warm_cuts)
                self._warm_cuts = info.get("cuts", [])[-24:]
            except SolverError as err:
                if err.best is None:
                    raise
                psi, info = err.best, {"gap": err.gap, "converged": False}
            return psi, info
        space = game.space
        c = space.diameter_inf
        # closed forms cover boxes and low-dimensional simplices; all other
        # spaces run the sampling variant
        has_closed_form = space.kind == "box" or \
            (space.kind == "simplex" and space.dim <= 3)
        if self.config.ftpl_sampling or not has_closed_form:
            cfg = FtplConfig.sampling(eps, delta_fail=1.0 / game.t ** 2,
                                      dim=space.dim, c=c,
                                      inner_cap=self.config.ftpl_inner_cap,
                                      sample_cap=self.config.ftpl_sample_cap)
        else:
            cfg = FtplConfig.deterministic(eps, dim=space.dim, c=c,
                                           inner_cap=self.config.ftpl_inner_cap)
        return solve_ftpl(game, cfg, rng=rng,
                          record_trace=self.config.record_traces)

    # -- protocol -------------------------------------------------------------

    def step(self, x=None):
        """Produce this round's mixed prediction and its sampled realization.

        The previous round's outcome must have been ingested.
        """
        if self._pending is not None:
            raise RuntimeError("previous round's outcome was not ingested")
        t = self.t
        prefix = self.transcript
        events = self.config.events_at(t, prefix)
        if self.experts is None:
            n = n_reduction_experts(self.config.space.dim, len(events))
            self.experts = SmallLossExperts(n, self.config.t_max)
            self.transcript = Transcript(self.config.space.dim, len(events))
            prefix = self.transcript
        elif n_reduction_experts(self.config.space.dim, len(events)) \
                != self.experts.n_experts:
            raise ValueError("per-round event collections must keep a fixed size")

        q = self.experts.weights()
        game = RoundGame(self.config.space, events, q, t=t, x=x, prefix=prefix)
        eps = 1.0 / t
        rng = self._round_rng(t)
        try:
            psi, info = self._solve_round(game, eps, rng)
        except (SolverError, FloatingPointError) as err:
            raise SolverError(f"round {t} solver failure: {err}") from err
        self.gap_log.append((t, eps, float(info.get("gap", np.nan)),
                             bool(info.get("converged", True))))
        if self.config.record_traces and info.get("trace") is not None:
            self.traces.append(info["trace"])

        p = psi.sample(rng)
        evals = events.eval_all(prefix, x, p)
        if events.disjoint:
            events.check_disjoint(evals)
        self._pending = (x, p, evals)
        self._last_psi = psi
        return psi, p

    def ingest_outcome(self, y):
        """Record the adversary's outcome for the pending round."""
        if self._pending is None:
            raise RuntimeError("no pending round; call step() first")
        y = np.asarray(y, dtype=float)
        space = self.config.space
        if not space.contains_external(y, tol=1e-7):
            raise ValueError("outcome is outside the prediction space")
        x, p, evals = self._pending
        self.transcript.append(x, p, y, evals)
        diff = space.to_internal(p) - space.to_internal(y)
        gains = reduction_gains(evals, diff)
        try:
            self.experts.update(gains)
        except ValueError as err:
            raise ValueError(f"event gains escaped [-1, 1] (normalization "
                             f"bug): {err}") from err
        self._pending = None
        self.t += 1

    @property
    def last_psi(self):
        return self._last_psi

    def slack_log(self):
        """Per-round positive gap slack (achieved gap minus target)."""
        return [(t, max(0.0, gap - eps)) for t, eps, gap, _ in self.gap_log]

    # -- snapshot / restore --------------------------------------------------

    def snapshot(self):
        """Full state as a self-describing binary blob."""
        return SNAPSHOT_MAGIC + pickle.dumps(self, protocol=5)

    @classmethod
    def restore(cls, blob):
        if not blob.startswith(SNAPSHOT_MAGIC):
            raise ValueError("not a predictor snapshot")
        obj = pickle.loads(blob[len(SNAPSHOT_MAGIC):])
        if not isinstance(obj, cls):
            raise ValueError("snapshot does not contain a predictor")
        return obj
