"""Small-loss experts subroutine.

Corrected multiplicative weights over an expanded expert set: each base
expert is replicated at learning rates eta in {2^-j : 1 <= j <= J}, with
J = ceil(log2(sqrt(T_max))) + 2, multiplicative update
w <- w * exp(eta*g - eta^2*g^2), output clipped below at a floor mass and
marginalized over the rate grid. Per-expert regret scales with the square
root of that expert's cumulative squared gain.
"""

from __future__ import annotations

import math

import numpy as np


class SmallLossExperts:
    """Experts algorithm with per-expert second-order regret bounds.

    Deterministic given the gain history: ``weights()`` is a pure function of
    the gains seen so far.
    """

    def __init__(self, n_experts, t_max):
        if n_experts < 1:
            raise ValueError("need at least one expert")
        if t_max < 1:
            raise ValueError("t_max must be positive")
        self.n_experts = int(n_experts)
        self.t_max = int(t_max)
        self.n_scales = int(math.ceil(math.log2(math.sqrt(self.t_max)))) + 2
        self.etas = 2.0 ** -np.arange(1, self.n_scales + 1)
        # floor mass per expanded expert; total floor mass is 1/t_max
        self.floor = 1.0 / (self.n_experts * self.t_max * self.n_scales)
        self._log_w = np.zeros((self.n_scales, self.n_experts))
        self.round = 0
        self._cum_gains = np.zeros(self.n_experts)
        self._cum_alg_gain = 0.0

    def weights(self):
        """Current distribution over base experts."""
        logw = self._log_w - self._log_w.max()
        w = np.exp(logw)
        w /= w.sum()
        gamma = self.floor * self.n_experts * self.n_scales
        w = (1.0 - gamma) * w + gamma / (self.n_scales * self.n_experts)
        return w.sum(axis=0)

    def update(self, gains):
        gains = np.asarray(gains, dtype=float)
        if gains.shape != (self.n_experts,):
            raise ValueError(f"expected {self.n_experts} gains, got shape "
                             f"{gains.shape}")
        bad = np.flatnonzero((gains < -1.0 - 1e-12) | (gains > 1.0 + 1e-12))
        if bad.size:
            i = int(bad[0])
            raise ValueError(f"gain for expert {i} is {gains[i]}, outside [-1, 1]")
        gains = np.clip(gains, -1.0, 1.0)
        q = self.weights()
        self._cum_alg_gain += float(q @ gains)
        self._cum_gains += gains
        self._log_w += (self.etas[:, None] * gains[None, :]
                        - (self.etas[:, None] ** 2) * (gains[None, :] ** 2))
        self.round += 1

    def regret(self, expert=None):
        """R_{t,i} = sum_tau (g_{tau,i} - ghat_tau)."""
        r = self._cum_gains - self._cum_alg_gain
        return r if expert is None else float(r[expert])

    @property
    def cumulative_gains(self):
        return self._cum_gains.copy()

    @property
    def algorithm_gain(self):
        return self._cum_alg_gain
