"""Per-round zero-sum game solver for binary, disjoint, convex events.

The learner-optimal mixed prediction is supported on one optimal point per
event region, so the game reduces to a linear program with |E|+1 variables
and one constraint per adversary response. Constraints are generated lazily:
alternate between solving the restricted LP and adding the adversary's best
response until the violation is within eps.
"""

from __future__ import annotations

import logging

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import MixedPrediction, fold_event_coeffs

logger = logging.getLogger(__name__)

LP_TOL = 1e-9


class SolverError(RuntimeError):
    """Raised when the solver hits its iteration cap; carries the best
    solution and gap found so far."""

    def __init__(self, message, best=None, gap=None):
        super().__init__(message)
        self.best = best
        self.gap = gap


@dataclass
class RoundGame:
    """One round of the prediction game: space, events, expert weights q over
    (coordinate, sign, event) triples, and the round index."""

    space: object
    events: object
    q: np.ndarray
    t: int = 1
    x: object = None
    prefix: object = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        expected = 2 * self.space.dim * len(self.events)
        if self.q.shape != (expected,):
            raise ValueError(f"q must have length {expected}")

    @property
    def coeffs(self):
        """(|E|, d) folded coefficients c[e,i] = q[(e,i,+)] - q[(e,i,-)]."""
        return fold_event_coeffs(self.q, self.space.dim, len(self.events))


def _solve_region_lp(space, region, c, iter_cap=50, margin=0.0):
    """Minimize <c, p> (internal coords) over C intersected with the region.

    Generic path: LP over explicit halfspaces plus lazily generated cuts from
    the separation oracles. A positive margin tightens the region rows so the
    optimum lies strictly inside the region (keeping tie-broken events
    consistent). Ties on the optimal face are broken toward the
    lexicographically smallest point by a second LP. Returns None if
    infeasible.
    """
    d = space.dim
    lp = space.lp_data()
    if lp is None:
        a_ub, b_ub, a_eq, b_eq = None, None, None, None
        bounds = [(-0.5, 0.5)] * d
    else:
        a_ub, b_ub, a_eq, b_eq, bounds = lp
    rows = [] if a_ub is None else list(a_ub)
    rhs = [] if b_ub is None else list(b_ub)
    ra, rb = region.halfspaces_internal(space)
    if ra is not None:
        scale = np.abs(ra).max(axis=1)
        rows.extend(ra)
        rhs.extend(rb - margin * np.maximum(scale, 1.0))

    def solve(obj, extra_rows, extra_rhs):
        all_rows = rows + extra_rows
        all_rhs = rhs + extra_rhs
        res = linprog(obj,
                      A_ub=np.array(all_rows) if all_rows else None,
                      b_ub=np.array(all_rhs) if all_rhs else None,
                      A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
        return res

    cuts_a, cuts_b = [], []
    for _ in range(iter_cap):
        res = solve(c, cuts_a, cuts_b)
        if res.status == 2:
            return None  # infeasible region
        if not res.success:
            raise SolverError(f"region LP failed: {res.message}")
        p = res.x
        cut = region.separate_internal(space, p, tol=1e-8)
        if cut is None and space.kind == "custom":
            cut = space.separation(p, tol=1e-8)
        if cut is None:
            # lexicographic tie-break on the optimal face
            val = float(c @ p)
            lex = 2.0 ** -np.arange(1, d + 1)
            res2 = solve(lex, cuts_a + [list(c)], cuts_b + [val + 1e-9])
            if res2.success:
                p2 = res2.x
                if region.separate_internal(space, p2, tol=1e-7) is None:
                    p = p2
            return p
        cuts_a.append(list(cut[0]))
        cuts_b.append(float(cut[1]))
    raise SolverError("region LP constraint generation did not converge")


def event_optimal_points(game, iter_cap=50):
    """Optimal prediction per event region: argmin of the event's folded
    linear objective over {p in C : E(p) = 1}.

    Region optima are taken slightly inside the region so that the event
    really fires at the returned point (tie boundaries belong to other
    events under the lexicographic rule); each point is verified against the
    event itself. Returns (points, feasible) where points[e] is an
    internal-coordinate vector or None; empty regions are dropped with a
    warning.
    """
    from .core import REGION_MARGIN

    coeffs = game.coeffs
    points, feasible = [], []
    for e, event in enumerate(game.events):
        if event.region is None:
            raise ValueError(f"event {event.id} has no convex region; use the "
                             "general solver")
        c = coeffs[e]
        p = event.region.minimize_linear(game.space, c)
        if p is None:
            p = _solve_region_lp(game.space, event.region, c,
                                 iter_cap=iter_cap, margin=REGION_MARGIN)
            if p is None:  # strict interior empty; retry on the closure
                p = _solve_region_lp(game.space, event.region, c,
                                     iter_cap=iter_cap)
        if p is not None:
            fired = float(event(game.prefix, game.x,
                                game.space.to_external(p)))
            if fired != 1.0:
                logger.warning("event %s does not fire at its region optimum "
                               "at round %d; dropped", event.id, game.t)
                p = None
        if p is None:
            logger.warning("event %s has an empty region at round %d; dropped",
                           event.id, game.t)
            points.append(None)
            feasible.append(False)
        else:
            points.append(np.asarray(p, dtype=float))
            feasible.append(True)
    return points, feasible


def solve_lp(game, eps, iter_cap=100, points=None, warm_cuts=None):
    """eps-approximate learner equilibrium for the round game.

    Returns (MixedPrediction over the event-optimal points, info dict with
    the certified gap and the adversary cuts used, which can warm-start the
    next round). Raises SolverError carrying the best solution found if
    constraint generation does not converge within iter_cap.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    space = game.space
    coeffs = game.coeffs
    if points is None:
        points, feasible = event_optimal_points(game)
    else:
        feasible = [p is not None for p in points]
    idx = [e for e, ok in enumerate(feasible) if ok]
    if not idx:
        p0 = space.feasible_point()
        psi = MixedPrediction.point(space.to_external(p0))
        return psi, {"gap": 0.0, "iterations": 0, "converged": True}
    pts = np.array([points[e] for e in idx])           # (m, d) internal
    cs = coeffs[idx]                                   # (m, d)
    consts = np.einsum("md,md->m", cs, pts)            # c_e . p*_e
    m = len(idx)

    if m == 1:
        # single feasible column: the point mass is optimal, gap is exact
        gap = float(consts[0] + space.max_linear(cs[0]))
        psi = MixedPrediction.point(space.to_external(pts[0]))
        return psi, {"gap": gap, "iterations": 0, "converged": gap <= eps}

    # LP variables [psi_1..psi_m, gamma]; constraints added per adversary cut
    a_eq = np.zeros((1, m + 1))
    a_eq[0, :m] = 1.0
    b_eq = np.array([1.0])
    bounds = [(0.0, 1.0)] * m + [(-2.0, 2.0)]
    obj = np.zeros(m + 1)
    obj[m] = 1.0

    cut_rows = []
    cut_points = []

    def add_cut(y):
        row = np.zeros(m + 1)
        row[:m] = consts - cs @ y
        row[m] = -1.0
        cut_rows.append(row)
        cut_points.append(np.asarray(y, dtype=float))

    add_cut(space.feasible_point())
    for y in warm_cuts or []:
        add_cut(y)
    best = None
    best_gap = np.inf
    for it in range(1, iter_cap + 1):
        res = linprog(obj, A_ub=np.array(cut_rows), b_ub=np.zeros(len(cut_rows)),
                      A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if not res.success:
            raise SolverError(f"reduced LP failed: {res.message}",
                              best=best, gap=best_gap)
        psi = res.x[:m]
        gamma = res.x[m]
        if psi.min() < -LP_TOL or abs(psi.sum() - 1.0) > LP_TOL:
            psi = simplex_projection(psi)
        s_agg = psi @ cs
        value = float(psi @ consts + space.max_linear(s_agg))
        mixed = MixedPrediction(space.to_external(pts), psi)
        if value < best_gap:
            best, best_gap = mixed, value
        # gamma (restricted LP) lower-bounds the optimum, value upper-bounds it
        if value <= gamma + eps:
            return best, {"gap": best_gap, "iterations": it,
                          "converged": True, "cuts": cut_points}
        add_cut(space.linear_opt(s_agg))
    raise SolverError(f"minimax LP did not converge in {iter_cap} iterations",
                      best=best, gap=best_gap)


def adversary_best_response(space, psi, game):
    """Maximizing outcome against a mixed prediction, via the linear
    optimization oracle, plus the achieved value."""
    support_int = np.array([space.to_internal(p) for p in psi.support])
    coeffs = game.coeffs
    s_agg = np.zeros(space.dim)
    const = 0.0
    for w, p_int, p_ext in zip(psi.probs, support_int, psi.support):
        evals = game.events.eval_all(game.prefix, game.x, p_ext)
        active = evals @ coeffs                     # sum_e E(p) c_e
        s_agg += w * active
        const += w * float(active @ p_int)
    y_int = space.linear_opt(s_agg)
    value = const - float(s_agg @ y_int)
    return space.to_external(y_int), value


def game_value(space, psi, game, y_ext):
    """E_{p~psi}[u_t(p, y)] for a fixed outcome (user units)."""
    y_int = space.to_internal(y_ext)
    coeffs = game.coeffs
    total = 0.0
    for w, p_ext in zip(psi.probs, psi.support):
        evals = game.events.eval_all(game.prefix, game.x, p_ext)
        active = evals @ coeffs
        total += w * float(active @ (space.to_internal(p_ext) - y_int))
    return total


def simplex_projection(v):
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.flatnonzero(u + (1.0 - css) / np.arange(1, v.size + 1) > 0)[-1]
    theta = (1.0 - css[rho]) / (rho + 1.0)
    return np.clip(v + theta, 0.0, None)
