"""Frozen constants, calibrated once on the reference suite and committed.

Each constant multiplies the corresponding theoretical rate form; property
and acceptance tests enforce the bounds with these exact values. Do not
tune them per run.
"""

from __future__ import annotations

import math

# experts subroutine: R_{T,i} <= c * (ln(n*T_max) + sqrt(ln(n*T_max) * sum g_i^2))
EXPERTS_REGRET_C = 20.0

# unbiasedness: mean-over-seeds |bias(E, i)| <=
#   c * (ln(2 d |E| T_max) + sqrt(ln(2 d |E| T_max) * sum_t E_t^2))
UNBIASEDNESS_C = 0.5

# realized-bound constant used when instantiating regret/coverage bound RHS
# (swap, subsequence, causal applications)
ALPHA_HAT_C = 0.5

# per-label transparent coverage:
#   mean T * |realized - anticipated| <=
#     c * (ln(k |S| T_max) + sqrt(ln(k |S| T_max) * sum_t Pr[y in S_t]))
PER_LABEL_COVERAGE_C = 0.5

# set-size / multigroup conditional coverage:
#   |realized - target| <= c * k * ln(k |S| |G| T_max) / sqrt(incidence)
CONDITIONAL_COVERAGE_C = 0.05

# best-in-class: mean Bregman loss <= min_q loss(q) +
#   c * k * L * sqrt(ln(k |Q| T)) * T^(3/4)
BEST_IN_CLASS_C = 0.1


def log_term(dim, n_events, t_max):
    """ln(2 d |E| T_max), the shared logarithmic factor."""
    return math.log(2.0 * dim * n_events * t_max)


def alpha_hat(n, dim, n_events, t_max, c=ALPHA_HAT_C):
    """Frozen-constant bias bound evaluated at event frequency n."""
    lt = log_term(dim, n_events, t_max)
    return c * (lt + math.sqrt(lt * max(n, 0.0)))
