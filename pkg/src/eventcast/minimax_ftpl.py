"""Per-round zero-sum game solver for arbitrary (real-valued, overlapping)
events, by simulated self-play.

The maximizing player runs follow-the-perturbed-leader over its linear
objective; the minimizing player copies the maximizer's expected action each
inner round. The uniform distribution over the copied actions is an
eps-approximate equilibrium after enough inner rounds. A running certificate
(exact best-response gap of the average strategy, O(d) per inner round)
allows early stopping, and a hard inner-round cap keeps per-round work
bounded; on cap-hit the best average found is returned with its gap.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import MixedPrediction


@dataclass
class FtplConfig:
    """Inner-play parameters.

    ``t_prime`` and ``delta`` follow the deterministic schedule
    T' = ceil(2 d C^2 / eps^2), delta = sqrt(2d / T'); the sampling variant
    uses T' = ceil(8 d C^2 / eps^2) and n = ceil((2 C^2/eps^2) ln(2 d T'/df))
    perturbation draws per inner round. An optional cap bounds the number of
    inner rounds actually played (the achieved gap is always reported).
    """

    eps: float
    t_prime: int
    delta: float
    mode: str = "closed_form"  # 'closed_form' | 'sample'
    n_samples: int = 0
    delta_fail: float = 0.0
    inner_cap: Optional[int] = None

    @classmethod
    def deterministic(cls, eps, dim, c=1.0, inner_cap=None):
        t_prime = int(math.ceil(2.0 * dim * c * c / (eps * eps)))
        return cls(eps=eps, t_prime=t_prime,
                   delta=math.sqrt(2.0 * dim / t_prime),
                   mode="closed_form", inner_cap=inner_cap)

    @classmethod
    def sampling(cls, eps, delta_fail, dim, c=1.0, inner_cap=None,
                 sample_cap=None):
        t_prime = int(math.ceil(8.0 * dim * c * c / (eps * eps)))
        n = int(math.ceil((2.0 * c * c / (eps * eps))
                          * math.log(2.0 * dim * t_prime / delta_fail)))
        if sample_cap is not None:
            # capped draws lose the a-priori eps guarantee but never the
            # certificate: the reported gap is exact for the returned average
            n = min(n, sample_cap)
        return cls(eps=eps, t_prime=t_prime,
                   delta=math.sqrt(2.0 * dim / t_prime),
                   mode="sample", n_samples=n, delta_fail=delta_fail,
                   inner_cap=inner_cap)


@dataclass
class FtplTrace:
    """Inner-play record for regret audits."""

    states: list = field(default_factory=list)   # s_t(p_tau), internal
    plays: list = field(default_factory=list)    # p_tau, internal
    t_prime: int = 0
    dim: int = 0
    c: float = 1.0
    space: object = None


def state_vector(game, p_ext):
    """s_{t,i}(p) = sum_sigma sum_E q_(i,sigma,E) * sigma * E(x_t, p);
    ||s||_1 <= 1 since q is a distribution."""
    evals = game.events.eval_all(game.prefix, game.x, p_ext)
    if game.events.disjoint:
        game.events.check_disjoint(evals)
    return evals @ game.coeffs


def _batch_linear_opt(space, shifted):
    """Row-wise linear_opt for a (n, d) batch of perturbed states."""
    if space.kind == "box":
        return np.where(shifted > 0, -space.box_half, space.box_half)
    if space.kind == "simplex":
        out = np.zeros_like(shifted)
        out[np.arange(shifted.shape[0]), np.argmin(shifted, axis=1)] = \
            space.simplex_mass
        return out
    return np.array([space.linear_opt(row) for row in shifted])


def solve_ftpl(game, cfg, rng=None, record_trace=False):
    """eps'-approximate equilibrium via FTPL self-play.

    Returns (MixedPrediction, info). info carries the certified gap of the
    returned average strategy, the number of inner rounds played, and whether
    the eps target was reached before the cap.
    """
    space = game.space
    d = space.dim
    coeffs = game.coeffs
    c_diam = space.diameter_inf

    trace = (FtplTrace(t_prime=cfg.t_prime, dim=d, c=c_diam, space=space)
             if record_trace else None)

    if np.abs(coeffs).sum() < 1e-15:
        p0 = space.to_external(space.feasible_point())
        info = {"gap": 0.0, "inner_rounds": 0, "converged": True,
                "t_prime": cfg.t_prime, "trace": trace}
        return MixedPrediction.point(p0), info

    t_eff = cfg.t_prime if cfg.inner_cap is None else min(cfg.t_prime,
                                                          cfg.inner_cap)
    t_eff = max(t_eff, 1)
    delta = math.sqrt(2.0 * d / t_eff)
    if trace is not None:
        trace.t_prime = t_eff

    if cfg.mode == "sample" and rng is None:
        raise ValueError("sampling mode requires an rng")
    closed_form = cfg.mode == "closed_form"
    if closed_form and space.perturbed_linear_opt_mean(np.zeros(d), delta) is None:
        raise ValueError("space has no closed-form perturbed expectation; "
                         "use sampling mode")

    # prefix sums let any window average be certified exactly in O(d)
    cum_s = np.zeros((t_eff + 1, d))
    cum_ps = np.zeros(t_eff + 1)
    plays = []
    best = (np.inf, 0, 0)        # (gap, window start, window end)
    converged = False
    tau = 0
    evalp = game.events.bind_round(game.prefix, game.x)
    check_disjoint = game.events.disjoint
    for tau in range(1, t_eff + 1):
        if closed_form:
            p_int = space.perturbed_linear_opt_mean(cum_s[tau - 1], delta)
        else:
            z = rng.uniform(0.0, 1.0 / delta, size=(cfg.n_samples, d))
            p_int = _batch_linear_opt(space,
                                      cum_s[tau - 1][None, :] + z).mean(axis=0)
        p_ext = space.to_external(p_int)
        evals = evalp(p_ext)
        if check_disjoint:
            game.events.check_disjoint(evals)
        s = evals @ coeffs
        if np.any(np.isnan(s)) or np.any(np.isnan(p_int)):
            raise FloatingPointError("NaN in FTPL state")
        cum_s[tau] = cum_s[tau - 1] + s
        cum_ps[tau] = cum_ps[tau - 1] + float(p_int @ s)
        plays.append(p_int)
        if trace is not None:
            trace.states.append(s.copy())
            trace.plays.append(p_int.copy())
        # certify the full average and the suffix-half average; the latter
        # drops the warmup plays once the dynamics settle
        for start in (0, tau // 2):
            width = tau - start
            gap = (cum_ps[tau] - cum_ps[start]
                   + space.max_linear(cum_s[tau] - cum_s[start])) / width
            if gap < best[0]:
                best = (gap, start, tau)
            if gap <= cfg.eps:
                converged = True
        if converged:
            break

    best_gap, start, end = best
    width = end - start
    support = space.to_external(np.array(plays[start:end]))
    psi = MixedPrediction(support, np.full(width, 1.0 / width))
    info = {"gap": best_gap, "inner_rounds": tau, "converged": converged,
            "t_prime": t_eff, "trace": trace}
    return psi, info


def ftpl_regret_audit(trace, check=True):
    """Hindsight regret of the inner maximizing player.

    R = max_y sum_tau <-y, s_tau> - sum_tau <-p_tau, s_tau>; the bound from
    the perturbed-leader analysis is sqrt(2 d C^2 T').
    """
    if not trace.states:
        return 0.0
    states = np.array(trace.states)
    plays = np.array(trace.plays)
    cum = states.sum(axis=0)
    # best fixed response: for internal boxes/simplices this is max_linear,
    # reconstructed here from the recorded dimensions
    best = _hindsight_best(trace, cum)
    realized = -float(np.einsum("td,td->", plays, states))
    regret = best - realized
    bound = math.sqrt(2.0 * trace.dim * trace.c ** 2 * trace.t_prime)
    if check and regret > bound + 1e-9:
        raise AssertionError(f"FTPL audit failed: regret {regret:.6f} exceeds "
                             f"bound {bound:.6f}")
    return regret


def _hindsight_best(trace, cum):
    if trace.space is not None:
        return trace.space.max_linear(cum)
    # conservative fallback when the trace was stored without its space
    return float(np.abs(cum).sum() * trace.c / 2.0)
