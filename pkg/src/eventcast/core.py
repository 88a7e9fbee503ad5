"""Shared domain types: prediction spaces, events, transcripts, utilities.

All public APIs speak "user units". Spaces whose sup-norm diameter exceeds
the internal normalization are affinely rescaled on construction; solvers
work in the rescaled (internal) coordinates and results are mapped back on
output. The rescale factor is recorded on the space.
"""

from __future__ import annotations

import functools

import numpy as np

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

MEMBERSHIP_TOL = 1e-9
TIE_EPS = 1e-12
# interior margin for event-region optimization: keeps region optima strictly
# inside their tie-broken cells (must exceed TIE_EPS)
REGION_MARGIN = 1e-9


# ---------------------------------------------------------------------------
# Prediction spaces
# ---------------------------------------------------------------------------

class PredictionSpace:
    """Convex compact subset of R^d with linear-optimization and separation
    oracles.

    Internal coordinates satisfy 2 * max ||y||_inf <= 1 via the affine map
    ``internal = (external - offset) * scale``.
    """

    def __init__(self, dim, kind, offset, scale, *, box_half=None,
                 simplex_mass=None, ext_linear_opt=None, ext_separation=None):
        self.dim = int(dim)
        self.kind = kind  # 'box' | 'simplex' | 'custom'
        self.offset = np.asarray(offset, dtype=float)
        self.scale = float(scale)
        self.box_half = None if box_half is None else np.asarray(box_half, dtype=float)
        self.simplex_mass = simplex_mass
        self._ext_linear_opt = ext_linear_opt
        self._ext_separation = ext_separation

    # -- constructors -------------------------------------------------------

    @classmethod
    def box(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("box bounds must satisfy lo <= hi coordinatewise")
        center = (lo + hi) / 2.0
        half = (hi - lo) / 2.0
        m = half.max() if half.size else 0.0
        scale = 1.0 if m <= 0.5 else 0.5 / m
        return cls(lo.size, "box", center, scale, box_half=half * scale)

    @classmethod
    def simplex(cls, dim):
        # external simplex has max ||y||_inf = 1, so 2*max = 2 > 1
        scale = 0.5
        return cls(dim, "simplex", np.zeros(dim), scale, simplex_mass=scale)

    @classmethod
    def custom(cls, dim, linear_opt, separation, bound_inf):
        scale = 1.0 if bound_inf <= 0.5 else 0.5 / float(bound_inf)
        return cls(dim, "custom", np.zeros(dim), scale,
                   ext_linear_opt=linear_opt, ext_separation=separation)

    # -- coordinate maps ----------------------------------------------------

    def to_internal(self, y):
        return (np.asarray(y, dtype=float) - self.offset) * self.scale

    def to_external(self, y):
        return np.asarray(y, dtype=float) / self.scale + self.offset

    @property
    def diameter_inf(self):
        """2 * max ||y||_inf over internal coordinates."""
        if self.kind == "box":
            return 2.0 * (self.box_half.max() if self.box_half.size else 0.0)
        if self.kind == "simplex":
            return 2.0 * self.simplex_mass
        return 1.0  # custom spaces are normalized to exactly <= 1

    # -- oracles (internal coordinates) --------------------------------------

    def linear_opt(self, s):
        """argmax_{y in C} <-y, s> in internal coordinates."""
        s = np.asarray(s, dtype=float)
        if self.kind == "box":
            y = np.where(s > 0, -self.box_half, self.box_half)
            # sign(0) -> +: maximize -y*0 is a tie, take +half
            return y
        if self.kind == "simplex":
            j = int(np.argmin(s))
            y = np.zeros(self.dim)
            y[j] = self.simplex_mass
            return y
        y_ext = np.asarray(self._ext_linear_opt(s), dtype=float)
        y = self.to_internal(y_ext)
        if not self.contains(y, tol=MEMBERSHIP_TOL * 10):
            raise ValueError("custom linear_opt returned a point outside the space")
        return y

    def max_linear(self, s):
        """max_{y in C} <-y, s> (used for cheap equilibrium certificates)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "box":
            return float(np.abs(s) @ self.box_half)
        if self.kind == "simplex":
            return float(-self.simplex_mass * s.min())
        y = self.linear_opt(s)
        return float(-(y @ s))

    def separation(self, p, tol=MEMBERSHIP_TOL):
        """None if p (internal) is in C, else a violated halfspace (a, b) with
        a.p <= b for all of C."""
        p = np.asarray(p, dtype=float)
        if self.kind == "box":
            over = p - self.box_half
            i = int(np.argmax(over))
            if over[i] > tol:
                a = np.zeros(self.dim)
                a[i] = 1.0
                return a, self.box_half[i]
            under = -self.box_half - p
            i = int(np.argmax(under))
            if under[i] > tol:
                a = np.zeros(self.dim)
                a[i] = -1.0
                return a, self.box_half[i]
            return None
        if self.kind == "simplex":
            i = int(np.argmin(p))
            if p[i] < -tol:
                a = np.zeros(self.dim)
                a[i] = -1.0
                return a, 0.0
            gap = p.sum() - self.simplex_mass
            if abs(gap) > tol:
                a = np.ones(self.dim) * (1.0 if gap > 0 else -1.0)
                return a, self.simplex_mass * (1.0 if gap > 0 else -1.0)
            return None
        res = self._ext_separation(self.to_external(p))
        if res is None:
            return None
        a_ext, b_ext = res
        a_ext = np.asarray(a_ext, dtype=float)
        # <a, p_ext> <= b  ==>  <a/scale, p_int> <= b - <a, offset>
        return a_ext / self.scale, float(b_ext - a_ext @ self.offset)

    def contains(self, p, tol=MEMBERSHIP_TOL):
        return self.separation(p, tol=tol) is None

    def contains_external(self, y, tol=MEMBERSHIP_TOL):
        return self.contains(self.to_internal(y), tol=tol)

    def feasible_point(self):
        """A deterministic interior-ish internal point."""
        if self.kind == "box":
            return np.zeros(self.dim)
        if self.kind == "simplex":
            return np.full(self.dim, self.simplex_mass / self.dim)
        return self.linear_opt(np.zeros(self.dim))

    def lp_data(self):
        """(A_ub, b_ub, A_eq, b_eq, bounds) over internal coordinates, or None
        when the space is only accessible through its separation oracle."""
        if self.kind == "box":
            bounds = [(-h, h) for h in self.box_half]
            return None, None, None, None, bounds
        if self.kind == "simplex":
            a_eq = np.ones((1, self.dim))
            b_eq = np.array([self.simplex_mass])
            bounds = [(0.0, self.simplex_mass)] * self.dim
            return None, None, a_eq, b_eq, bounds
        return None

    def with_constant_coordinate(self, value=1.0):
        """Box product C x {value}, used to express affine utilities as linear
        ones over an augmented outcome."""
        if self.kind != "box":
            raise NotImplementedError("constant-coordinate augmentation is only "
                                      "supported for box spaces")
        lo = self.offset - self.box_half / self.scale
        hi = self.offset + self.box_half / self.scale
        return PredictionSpace.box(np.append(lo, value), np.append(hi, value))

    # -- perturbed-leader closed forms ---------------------------------------

    def perturbed_linear_opt_mean(self, a, delta):
        """E_z[ linear_opt(a + z) ] for z ~ Unif[0, 1/delta]^d, or None if no
        closed form is available for this space."""
        a = np.asarray(a, dtype=float)
        if self.kind == "box":
            q = np.clip(1.0 + a * delta, 0.0, 1.0)  # Pr[z_i > -a_i]
            return self.box_half * (1.0 - 2.0 * q)
        if self.kind == "simplex":
            probs = perturbed_argmin_probs(a, delta)
            return self.simplex_mass * probs
        return None


@functools.lru_cache(maxsize=8)
def _leggauss_cached(order):
    return np.polynomial.legendre.leggauss(order)


def perturbed_argmin_probs(a, delta):
    """Pr[argmin_j (a_j + z_j) = j] for z ~ Unif[0, 1/delta]^d, exactly.

    The integrand is piecewise polynomial of degree <= d-1 on the global
    breakpoint grid, so fixed-order Gauss-Legendre per piece integrates it
    exactly. Memory scales with d^3, fine at application dimensions.
    """
    a = np.asarray(a, dtype=float)
    d = a.size
    if d == 1:
        return np.ones(1)
    nodes, weights = _leggauss_cached(max(2, (d + 1) // 2))
    b = delta * (a[:, None] - a[None, :])  # factors clamp(1 - b[j,k] - u, 0, 1)
    cuts = np.unique(np.clip(np.concatenate(
        ([0.0, 1.0], (1.0 - b).ravel(), (-b).ravel())), 0.0, 1.0))
    half = (cuts[1:] - cuts[:-1]) / 2.0
    keep = half > 1e-15
    half = half[keep]
    mid = ((cuts[1:] + cuts[:-1]) / 2.0)[keep]
    u = mid[:, None] + half[:, None] * nodes[None, :]          # (I, G)
    f = np.clip(1.0 - b[:, :, None, None] - u[None, None, :, :], 0.0, 1.0)
    f[np.arange(d), np.arange(d)] = 1.0
    poly = f.prod(axis=1)                                      # (j, I, G)
    probs = (poly @ weights) @ half
    s = probs.sum()
    if s > 0:
        probs /= s  # remove residual rounding; exact sum is 1
    return probs


# ---------------------------------------------------------------------------
# Convex regions (supports of binary events, external units)
# ---------------------------------------------------------------------------

@dataclass
class ConvexRegion:
    """Halfspace description A y <= b (external units), plus an optional extra
    separation callback for non-polyhedral pieces."""

    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    separation: Optional[Callable] = None

    def halfspaces_internal(self, space):
        if self.a_ub is None:
            return None, None
        a = np.asarray(self.a_ub, dtype=float)
        b = np.asarray(self.b_ub, dtype=float)
        return a / space.scale, b - a @ space.offset

    def separate_internal(self, space, p, tol=MEMBERSHIP_TOL):
        a, b = self.halfspaces_internal(space)
        if a is not None:
            viol = a @ p - b
            i = int(np.argmax(viol))
            if viol[i] > tol:
                return a[i], b[i]
        if self.separation is not None:
            res = self.separation(space.to_external(p))
            if res is not None:
                a_ext, b_ext = res
                a_ext = np.asarray(a_ext, dtype=float)
                return a_ext / space.scale, float(b_ext - a_ext @ space.offset)
        return None

    def minimize_linear(self, space, c):
        """Optional analytic fast path; None defers to the generic LP."""
        if self.separation is not None:
            return None
        if self.a_ub is not None and len(self.a_ub) > 0:
            return None
        # unconstrained region: minimize over the space itself
        c = np.asarray(c, dtype=float)
        if np.abs(c).max(initial=0.0) < 1e-15:
            # zero objective: the space's deterministic representative
            return space.feasible_point()
        if space.kind == "box":
            # ties (c_i == 0) resolve to the lower corner
            return np.where(c < 0, space.box_half, -space.box_half)
        if space.kind == "simplex":
            j = int(np.flatnonzero(c <= c.min() + TIE_EPS)[0])
            p = np.zeros(space.dim)
            p[j] = space.simplex_mass
            return p
        return None


class ArgmaxRegion(ConvexRegion):
    """{y : y_index >= y_j for all j}; the best-response region of the
    coordinate-picking utility."""

    def __init__(self, index, dim):
        a = []
        for j in range(dim):
            if j == index:
                continue
            row = np.zeros(dim)
            row[j] = 1.0
            row[index] = -1.0
            a.append(row)
        super().__init__(np.array(a) if a else np.zeros((0, dim)),
                         np.zeros(max(dim - 1, 0)))
        self.index = index
        self.dim = dim

    def minimize_linear(self, space, c):
        # analytic only on uniform boxes (equal half-widths); internal box is
        # centered so the region stays symmetric
        if space.kind != "box":
            return None
        h = space.box_half
        if h.size == 0 or not np.allclose(h, h[0]) or h[0] <= 0:
            return None
        hw = h[0]
        idx = self.index
        c = np.asarray(c, dtype=float)
        # fix v = p_idx; each other coordinate independently minimizes over
        # [-hw, min(v - margin, hw)]; the margin keeps the point strictly
        # inside the cell so the lexicographic tie rule cannot reassign it
        eta = REGION_MARGIN
        others = [j for j in range(self.dim) if j != idx]
        neg = [j for j in others if c[j] < 0]
        slope = c[idx] + sum(c[j] for j in neg)
        v = -hw + eta if slope >= 0 else hw  # ties -> smallest v
        p = np.empty(self.dim)
        p[idx] = v
        for j in others:
            p[j] = min(v - eta, hw) if c[j] < 0 else -hw
        return p


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

class Event:
    """Mapping (transcript prefix, context, prediction) -> [0, 1]."""

    def __init__(self, event_id, binary=False, region=None):
        self.id = str(event_id)
        self.binary = bool(binary)
        self.region = region

    def __call__(self, prefix, x, p):
        raise NotImplementedError

    def __repr__(self):
        return f"<Event {self.id}>"


class FunctionEvent(Event):
    def __init__(self, event_id, fn, binary=False, region=None):
        super().__init__(event_id, binary=binary, region=region)
        self.fn = fn

    def __call__(self, prefix, x, p):
        return self.fn(prefix, x, p)


class AlwaysOnEvent(Event):
    def __init__(self, event_id="always"):
        super().__init__(event_id, binary=True, region=ConvexRegion())

    def __call__(self, prefix, x, p):
        return 1.0


class BestResponseEvent(Event):
    """E_{u,a}: active when a is the decision maker's best response to p."""

    def __init__(self, utility, action, region=None):
        super().__init__(f"br[{utility.name}|a={action}]", binary=True,
                         region=region)
        self.utility = utility
        self.action = int(action)

    def __call__(self, prefix, x, p):
        return 1.0 if self.utility.best_response(p) == self.action else 0.0


class GroupEvent(Event):
    """Context-only event G(x) in [0,1]; prediction-independent, so its
    support region is the whole space."""

    def __init__(self, event_id, group_fn, binary=False):
        super().__init__(event_id, binary=binary, region=ConvexRegion())
        self.group_fn = group_fn

    def __call__(self, prefix, x, p):
        return float(self.group_fn(x))


class ProductEvent(Event):
    def __init__(self, first, second):
        binary = first.binary and second.binary
        super().__init__(f"{first.id}*{second.id}", binary=binary)
        self.first = first
        self.second = second

    def __call__(self, prefix, x, p):
        v = self.first(prefix, x, p)
        if v == 0.0:
            return 0.0
        return v * self.second(prefix, x, p)


class EventCollection:
    """Ordered list of events with an optional shared fast evaluator."""

    def __init__(self, events, disjoint=False, evaluator=None):
        self.events = list(events)
        self.disjoint = bool(disjoint)
        self.evaluator = evaluator

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    @property
    def ids(self):
        return [e.id for e in self.events]

    @property
    def all_binary(self):
        return all(e.binary for e in self.events)

    @property
    def all_convex(self):
        return all(e.region is not None for e in self.events)

    def eval_all(self, prefix, x, p):
        if self.evaluator is not None:
            vals = np.asarray(self.evaluator(prefix, x, p), dtype=float)
        else:
            vals = np.array([float(e(prefix, x, p)) for e in self.events])
        if vals.min(initial=0.0) < -1e-9 or vals.max(initial=0.0) > 1.0 + 1e-9:
            bad = int(np.argmax(np.maximum(vals - 1.0, -vals)))
            raise ValueError(f"event {self.events[bad].id} value {vals[bad]} "
                             "outside [0, 1]")
        return np.clip(vals, 0.0, 1.0)

    def bind_round(self, prefix, x):
        """Prediction-only evaluator for a fixed round; specialized
        evaluators may fold context-dependent work here."""
        if self.evaluator is not None and hasattr(self.evaluator, "bind_round"):
            return self.evaluator.bind_round(prefix, x)
        return lambda p: self.eval_all(prefix, x, p)

    def check_disjoint(self, values, tol=1e-9):
        if self.disjoint and values.sum() > 1.0 + tol:
            raise ValueError("disjoint event collection fired with total mass "
                             f"{values.sum():.6f} > 1")

    def union(self, other):
        return EventCollection(self.events + list(other), disjoint=False)


# ---------------------------------------------------------------------------
# Linear utilities and best responses
# ---------------------------------------------------------------------------

@dataclass
class LinearUtility:
    """u(a, y) = <W_a, y> with K actions; L = max_a ||W_a||_1."""

    weights: np.ndarray
    name: str = "u"

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))

    @property
    def n_actions(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    @property
    def lipschitz(self):
        return float(np.abs(self.weights).sum(axis=1).max())

    def values(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dim:
            raise ValueError(f"outcome dimension {y.shape[-1]} != {self.dim}")
        return self.weights @ y

    def value(self, action, y):
        return float(self.values(y)[action])

    def best_response(self, p):
        vals = self.values(p)
        return int(np.flatnonzero(vals >= vals.max() - TIE_EPS)[0])

    @classmethod
    def affine(cls, weights, offsets, name="u"):
        """Utility <W_a, y> + c_a over the constant-augmented space."""
        w = np.atleast_2d(np.asarray(weights, dtype=float))
        c = np.asarray(offsets, dtype=float).reshape(-1, 1)
        return cls(np.hstack([w, c]), name=name)


def best_response(utility, p):
    """Best-response action index, ties broken by smallest index."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != utility.dim:
        raise ValueError(f"prediction dimension {p.shape[-1]} != {utility.dim}")
    return utility.best_response(p)


class _BestResponseEvaluator:
    """Shared evaluator: one argmax per prediction instead of K."""

    def __init__(self, utility):
        self.utility = utility

    def __call__(self, prefix, x, p):
        out = np.zeros(self.utility.n_actions)
        out[self.utility.best_response(p)] = 1.0
        return out


def best_response_events(utility):
    """The K disjoint binary events {best_response(u, p) == a}."""
    k, d = utility.weights.shape
    identity_like = k == d and np.allclose(utility.weights, np.eye(d))
    events = []
    for a in range(k):
        if identity_like:
            region = ArgmaxRegion(a, d)
        else:
            rows = np.array([utility.weights[b] - utility.weights[a]
                             for b in range(k) if b != a])
            if rows.size == 0:
                rows = np.zeros((0, d))
            region = ConvexRegion(rows, np.zeros(rows.shape[0]))
        events.append(BestResponseEvent(utility, a, region=region))
    return EventCollection(events, disjoint=True,
                           evaluator=_BestResponseEvaluator(utility))


# ---------------------------------------------------------------------------
# Transcripts and bias accounting
# ---------------------------------------------------------------------------

@dataclass
class Round:
    x: object
    p: np.ndarray
    y: np.ndarray
    event_values: np.ndarray


class Transcript:
    """Ordered (context, prediction, outcome) triples with incremental
    per-event counters and signed per-coordinate bias accumulators."""

    def __init__(self, dim, n_events):
        self.dim = int(dim)
        self.n_events = int(n_events)
        self.rounds = []
        self._n = np.zeros(n_events)
        self._sumsq = np.zeros(n_events)
        self._bias = np.zeros((n_events, dim))

    def __len__(self):
        return len(self.rounds)

    def append(self, x, p, y, event_values):
        p = np.asarray(p, dtype=float)
        y = np.asarray(y, dtype=float)
        vals = np.asarray(event_values, dtype=float)
        if vals.shape != (self.n_events,):
            raise ValueError("event value vector has wrong length")
        self.rounds.append(Round(x, p, y, vals))
        self._n += vals
        self._sumsq += vals ** 2
        self._bias += vals[:, None] * (p - y)[None, :]

    def frequency(self, event_idx):
        return float(self._n[event_idx])

    @property
    def frequencies(self):
        return self._n.copy()

    @property
    def sum_sq(self):
        return self._sumsq.copy()

    @property
    def signed_bias(self):
        """Signed accumulators b_T(E, i) = sum_t E_t * (p_{t,i} - y_{t,i})."""
        return self._bias.copy()

    def recompute(self):
        """From-scratch counters; must equal the incremental state."""
        n = np.zeros(self.n_events)
        bias = np.zeros((self.n_events, self.dim))
        for r in self.rounds:
            n += r.event_values
            bias += r.event_values[:, None] * (r.p - r.y)[None, :]
        return n, bias

    def predictions(self):
        return np.array([r.p for r in self.rounds])

    def outcomes(self):
        return np.array([r.y for r in self.rounds])

    def contexts(self):
        return [r.x for r in self.rounds]

    def event_matrix(self):
        return np.array([r.event_values for r in self.rounds])


def bias_report(transcript, events):
    """Per-event absolute bias table: {event id: (|bias| per coordinate, n_T)}."""
    if len(transcript) == 0:
        raise ValueError("bias report requires a non-empty transcript")
    out = {}
    for idx, e in enumerate(events):
        out[e.id] = {
            "bias": np.abs(transcript.signed_bias[idx]),
            "n": transcript.frequency(idx),
        }
    return out


# ---------------------------------------------------------------------------
# Mixed predictions
# ---------------------------------------------------------------------------

class MixedPrediction:
    """Finite-support distribution over prediction points (user units)."""

    def __init__(self, support, probs, space=None):
        self.support = np.atleast_2d(np.asarray(support, dtype=float))
        self.probs = np.asarray(probs, dtype=float)
        if self.probs.shape[0] != self.support.shape[0]:
            raise ValueError("support/probs length mismatch")
        if np.any(self.probs < -1e-9):
            raise ValueError("negative probability in mixed prediction")
        total = self.probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixed prediction mass {total} != 1")
        self.probs = np.clip(self.probs, 0.0, None)
        self.probs /= self.probs.sum()
        if space is not None:
            for pt in self.support:
                if not space.contains_external(pt, tol=1e-7):
                    raise ValueError("mixed prediction support point outside the "
                                     "prediction space")

    @classmethod
    def point(cls, p):
        return cls(np.asarray(p, dtype=float)[None, :], np.array([1.0]))

    def __len__(self):
        return self.support.shape[0]

    def mean(self):
        return self.probs @ self.support

    def sample(self, rng):
        """Inverse-CDF draw over the finite support."""
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(self.probs), u, side="right"))
        idx = min(idx, len(self) - 1)
        return self.support[idx].copy()


# ---------------------------------------------------------------------------
# Expert indexing for the (coordinate, sign, event) reduction
# ---------------------------------------------------------------------------
# Flat layout: index((e, i, sigma)) = (e * d + i) * 2 + s with s = 0 for
# sigma = +1 and s = 1 for sigma = -1.  All solver modules share this layout.

def n_reduction_experts(dim, n_events):
    return 2 * dim * n_events


def fold_event_coeffs(q, dim, n_events):
    """Collapse sign pairs: coef[e, i] = q[(e,i,+)] - q[(e,i,-)]."""
    q = np.asarray(q, dtype=float).reshape(n_events, dim, 2)
    return q[:, :, 0] - q[:, :, 1]


def reduction_gains(event_values, diff_internal):
    """Per-expert gains sigma * E * (p_i - y_i) in the flat layout."""
    base = event_values[:, None] * diff_internal[None, :]  # (|E|, d)
    out = np.empty((len(event_values), diff_internal.size, 2))
    out[:, :, 0] = base
    out[:, :, 1] = -base
    return out.reshape(-1)
