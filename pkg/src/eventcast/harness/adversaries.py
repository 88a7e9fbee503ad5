"""Outcome-stream generators.

Each adversary exposes context(t, prefix) and outcome(t, prefix, x, p) and
is deterministic given its seed. Outcomes always lie in the prediction
space.
"""

from __future__ import annotations

import numpy as np

KINDS = ("iid", "replay", "threshold", "shift", "worstcase-events")


def _rng(seed, salt):
    return np.random.Generator(np.random.Philox(
        key=np.array([seed & 0xFFFFFFFFFFFFFFFF, salt], dtype=np.uint64)))


class BaseAdversary:
    def context(self, t, prefix):
        return None

    def outcome(self, t, prefix, x, p):
        raise NotImplementedError


class IidAdversary(BaseAdversary):
    """Independent outcomes: uniform/corner draws on boxes, Dirichlet or
    categorical one-hot draws on simplices."""

    def __init__(self, space, seed=0, mode="uniform", means=None,
                 concentration=1.0):
        self.space = space
        self.seed = seed
        self.mode = mode
        self.means = None if means is None else np.asarray(means, dtype=float)
        self.concentration = concentration
        self.rng = _rng(seed, 0xAD)

    def outcome(self, t, prefix, x, p):
        sp = self.space
        if sp.kind == "box":
            lo = sp.to_external(-sp.box_half)
            hi = sp.to_external(sp.box_half)
            if self.mode == "corners":
                return np.where(self.rng.random(sp.dim) < 0.5, lo, hi)
            if self.mode == "biased":
                y = self.means + self.rng.uniform(-1, 1, sp.dim) * (hi - lo) / 2
                return np.clip(y, lo, hi)
            return self.rng.uniform(lo, hi)
        if sp.kind == "simplex":
            if self.mode == "onehot":
                w = self.means if self.means is not None \
                    else np.full(sp.dim, 1.0 / sp.dim)
                y = np.zeros(sp.dim)
                y[self.rng.choice(sp.dim, p=w / w.sum())] = 1.0
                return y
            return self.rng.dirichlet(np.full(sp.dim, self.concentration))
        raise NotImplementedError(f"iid adversary for {sp.kind} spaces")


class ReplayAdversary(BaseAdversary):
    """Outcomes replayed from stored rows or a CSV file."""

    def __init__(self, rows=None, file=None):
        if file is not None:
            rows = _load_csv_rows(file)
        self.rows = [np.asarray(r, dtype=float) for r in rows or []]
        if not self.rows:
            raise ValueError("replay stream is empty")

    def outcome(self, t, prefix, x, p):
        if t > len(self.rows):
            raise ValueError(f"replay stream exhausted at round {t}")
        return self.rows[t - 1]


class ThresholdAdversary(BaseAdversary):
    """Threshold-style adaptive streams.

    d = 1 box: the classic calibration hard case y = 1[p < theta] (the
    dependence on the realized prediction is harmless there because the lone
    marginal objective is linear in the prediction). Simplices: the one-hot
    label whose recent predicted probability (a window average over past
    rounds, i.e. history only) is lowest.
    """

    def __init__(self, space, theta=0.5, window=25):
        self.space = space
        self.theta = theta
        self.window = window

    def outcome(self, t, prefix, x, p):
        sp = self.space
        if sp.kind == "box" and sp.dim == 1:
            lo = float(sp.to_external(-sp.box_half)[0])
            hi = float(sp.to_external(sp.box_half)[0])
            return np.array([hi if p[0] < self.theta else lo])
        if sp.kind == "simplex":
            y = np.zeros(sp.dim)
            if prefix is None or len(prefix) == 0:
                y[0] = 1.0
            else:
                recent = prefix.predictions()[-self.window:].mean(axis=0)
                y[int(np.argmin(recent))] = 1.0
            return y
        raise NotImplementedError("threshold adversary needs a 1-d box or a "
                                  "simplex")


class ShiftAdversary(BaseAdversary):
    """Drifting mean plus noise, clipped into the space."""

    def __init__(self, space, seed=0, period=500, amplitude=0.5, noise=0.25):
        self.space = space
        self.period = period
        self.amplitude = amplitude
        self.noise = noise
        self.rng = _rng(seed, 0x5F)

    def outcome(self, t, prefix, x, p):
        sp = self.space
        phase = np.sin(2 * np.pi * t / self.period)
        if sp.kind == "box":
            lo = sp.to_external(-sp.box_half)
            hi = sp.to_external(sp.box_half)
            center = (lo + hi) / 2
            span = (hi - lo) / 2
            drift = center + self.amplitude * phase * span
            return np.clip(drift + self.noise * span *
                           self.rng.normal(size=sp.dim), lo, hi)
        if sp.kind == "simplex":
            w = 1.0 + self.amplitude * phase * np.linspace(-1, 1, sp.dim)
            w = np.clip(w, 0.05, None)
            y = self.rng.dirichlet(w / self.noise if self.noise > 0 else w * 50)
            return y
        raise NotImplementedError


class WorstcaseEventsAdversary(BaseAdversary):
    """Targets one event's bias: whenever the named event fires on (x, p),
    push the outcome to the extreme opposing the prediction on the chosen
    coordinate; otherwise play the (deterministic) space center."""

    def __init__(self, space, events, target_idx=0, coord=0, sign=+1):
        self.space = space
        self.events = events
        self.target_idx = int(target_idx)
        self.coord = int(coord)
        self.sign = sign

    def outcome(self, t, prefix, x, p):
        sp = self.space
        vals = self.events.eval_all(prefix, x, p)
        if sp.kind == "box":
            lo = sp.to_external(-sp.box_half)
            hi = sp.to_external(sp.box_half)
            if vals[self.target_idx] > 0:
                y = (lo + hi) / 2
                y[self.coord] = lo[self.coord] if self.sign > 0 \
                    else hi[self.coord]
                return y
            return (lo + hi) / 2
        if sp.kind == "simplex":
            y = np.zeros(sp.dim)
            if vals[self.target_idx] > 0:
                j = self.coord if self.sign < 0 else \
                    int(np.argmin(p + 1e9 * (np.arange(sp.dim) ==
                                             self.coord)))
                y[j] = 1.0
            else:
                y[0] = 1.0
            return y
        raise NotImplementedError


class ContextMixin:
    """Deterministic categorical context stream shared by scenarios."""

    def __init__(self, n_categories=3, seed=0):
        self.n_categories = n_categories
        self.ctx_rng = _rng(seed, 0xC0)

    def context(self, t, prefix):
        return int(self.ctx_rng.integers(0, self.n_categories))


def _load_csv_rows(path):
    import csv

    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as err:
                raise ValueError(f"{path}: line {line_no}: {err}") from err
            if len(rows[-1]) != len(rows[0]):
                raise ValueError(f"{path}: line {line_no}: expected "
                                 f"{len(rows[0])} columns, got "
                                 f"{len(rows[-1])}")
    return rows


def make_adversary(kind, space, seed=0, events=None, params=None):
    params = dict(params or {})
    if kind == "iid":
        return IidAdversary(space, seed=seed, **params)
    if kind == "replay":
        return ReplayAdversary(rows=params.get("rows"),
                               file=params.get("file"))
    if kind == "threshold":
        return ThresholdAdversary(space, **params)
    if kind == "shift":
        return ShiftAdversary(space, seed=seed, **params)
    if kind == "worstcase-events":
        if events is None:
            raise ValueError("worstcase-events adversary needs the event "
                             "collection")
        return WorstcaseEventsAdversary(space, events, **params)
    raise ValueError(f"unknown adversary kind {kind!r}; choose from {KINDS}")
