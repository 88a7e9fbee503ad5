import numpy as np
import pytest

from hypothesis import given, settings
from hypothesis import strategies as st

from eventcast.core import (
    ArgmaxRegion,
    ConvexRegion,
    EventCollection,
    FunctionEvent,
    AlwaysOnEvent,
    LinearUtility,
    MixedPrediction,
    PredictionSpace,
    Transcript,
    best_response,
    best_response_events,
    bias_report,
    perturbed_argmin_probs,
    fold_event_coeffs,
    reduction_gains,
)


# ---------------------------------------------------------------------------
# best responses
# ---------------------------------------------------------------------------

def test_best_response_coordinate_argmax():
    u = LinearUtility(np.eye(2))
    assert best_response(u, np.array([0.3, 0.7])) == 1


def test_best_response_lexicographic_tie():
    u = LinearUtility(np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert best_response(u, np.array([0.5, 0.5])) == 0


def test_best_response_hand_oracle():
    # independent oracle: evaluate each action's dot product directly
    w = np.array([[2.0, -1.0], [0.0, 1.0]])
    p = np.array([0.4, 0.6])
    scores = [wa @ p for wa in w]          # [0.2, 0.6]
    assert scores[0] == pytest.approx(0.2)
    assert scores[1] == pytest.approx(0.6)
    assert best_response(LinearUtility(w), p) == int(np.argmax(scores))


def test_best_response_dimension_mismatch():
    u = LinearUtility(np.eye(3))
    with pytest.raises(ValueError):
        best_response(u, np.array([0.1, 0.9]))


def test_best_response_events_partition():
    u = LinearUtility(np.eye(2))
    evs = best_response_events(u)
    assert evs.disjoint and evs.all_binary and evs.all_convex
    vals = evs.eval_all(None, None, np.array([0.3, 0.7]))
    assert vals.tolist() == [0.0, 1.0]
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = rng.uniform(-1, 1, size=2)
        assert evs.eval_all(None, None, p).sum() == 1.0


def test_best_response_levelsets_convex():
    # same best response at p1, p2 implies same at every convex combination
    rng = np.random.default_rng(1)
    u = LinearUtility(rng.normal(size=(4, 3)))
    pts = rng.uniform(-1, 1, size=(200, 3))
    actions = [u.best_response(p) for p in pts]
    for _ in range(300):
        i, j = rng.integers(0, 200, size=2)
        if actions[i] != actions[j]:
            continue
        lam = rng.random()
        mix = lam * pts[i] + (1 - lam) * pts[j]
        assert u.best_response(mix) == actions[i]


def test_utility_lipschitz_and_linearity():
    rng = np.random.default_rng(2)
    u = LinearUtility(rng.normal(size=(5, 4)))
    L = u.lipschitz
    for _ in range(1000):
        a = rng.integers(0, 5)
        y1, y2 = rng.uniform(-1, 1, size=(2, 4))
        assert abs(u.value(a, y1) - u.value(a, y2)) <= \
            L * np.abs(y1 - y2).max() + 1e-12
    a1, a2 = rng.normal(size=2)
    y1, y2 = rng.uniform(-1, 1, size=(2, 4))
    lhs = u.values(a1 * y1 + a2 * y2)
    rhs = a1 * u.values(y1) + a2 * u.values(y2)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_affine_utility_constant_coordinate():
    u = LinearUtility.affine(np.array([[1.0, 0.0]]), np.array([2.5]))
    assert u.value(0, np.array([0.3, 0.0, 1.0])) == pytest.approx(2.8)


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------

def test_box_rescaling_and_roundtrip():
    sp = PredictionSpace.box([-3.0, 0.0], [3.0, 10.0])
    assert sp.diameter_inf <= 1.0 + 1e-12
    y = np.array([2.0, 7.0])
    assert np.allclose(sp.to_external(sp.to_internal(y)), y)
    assert sp.contains_external(y)
    assert not sp.contains_external(np.array([4.0, 7.0]))


def test_small_box_not_rescaled():
    sp = PredictionSpace.box([0.0], [1.0])
    assert sp.scale == 1.0
    assert sp.diameter_inf == pytest.approx(1.0)


def test_simplex_space():
    sp = PredictionSpace.simplex(3)
    assert sp.diameter_inf == pytest.approx(1.0)
    p = sp.to_internal(np.array([0.2, 0.3, 0.5]))
    assert sp.contains(p)
    assert sp.separation(np.array([0.3, 0.3, 0.3])) is not None  # mass 0.9 != 0.5


def test_linear_opt_membership_and_value():
    rng = np.random.default_rng(3)
    for sp in [PredictionSpace.box([-1, -2], [1, 2]), PredictionSpace.simplex(3)]:
        for _ in range(50):
            s = rng.normal(size=sp.dim)
            y = sp.linear_opt(s)
            assert sp.contains(y, tol=1e-9)
            assert sp.max_linear(s) == pytest.approx(-(y @ s), abs=1e-12)


def test_constant_coordinate_augmentation():
    sp = PredictionSpace.box([-1.0], [1.0]).with_constant_coordinate()
    assert sp.dim == 2
    y = sp.to_external(sp.linear_opt(np.array([1.0, -5.0])))
    assert y[1] == pytest.approx(1.0)
    assert sp.contains_external(np.array([0.3, 1.0]))
    assert not sp.contains_external(np.array([0.3, 0.9]))


def test_perturbed_mean_box_formula_vs_monte_carlo():
    sp = PredictionSpace.box([-1.0, -1.0], [1.0, 1.0])
    a = np.array([0.7, -2.0])
    delta = 0.9
    exact = sp.perturbed_linear_opt_mean(a, delta)
    rng = np.random.default_rng(4)
    z = rng.uniform(0, 1 / delta, size=(100000, 2))
    mc = np.where((a + z) > 0, -sp.box_half, sp.box_half).mean(axis=0)
    assert np.abs(exact - mc).max() < 0.01


def test_perturbed_argmin_probs_vs_monte_carlo():
    rng = np.random.default_rng(5)
    for d in (2, 3, 6):
        a = rng.normal(size=d)
        delta = 0.7
        exact = perturbed_argmin_probs(a, delta)
        z = rng.uniform(0, 1 / delta, size=(200000, d))
        mc = np.bincount(np.argmin(a + z, axis=1), minlength=d) / 200000
        assert exact.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.abs(exact - mc).max() < 0.01


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

def test_argmax_region_analytic_matches_lp():
    from eventcast.minimax_disjoint import _solve_region_lp
    sp = PredictionSpace.box([-1, -1, -1], [1, 1, 1])
    rng = np.random.default_rng(6)
    for _ in range(25):
        region = ArgmaxRegion(int(rng.integers(0, 3)), 3)
        c = rng.normal(size=3)
        fast = region.minimize_linear(sp, c)
        slow = _solve_region_lp(sp, region, c)
        assert fast is not None
        assert c @ fast == pytest.approx(c @ slow, abs=1e-8)
        # feasibility of the analytic point
        a, b = region.halfspaces_internal(sp)
        assert np.all(a @ fast <= b + 1e-9)


def test_trivial_region_zero_objective_is_center():
    sp = PredictionSpace.box([-0.5, -0.5], [0.5, 0.5])
    region = ConvexRegion()
    p = region.minimize_linear(sp, np.zeros(2))
    assert np.allclose(p, [0.0, 0.0])


# ---------------------------------------------------------------------------
# transcripts and bias
# ---------------------------------------------------------------------------

def _always():
    return AlwaysOnEvent("on")


def test_bias_report_zero_when_perfect():
    ev = EventCollection([_always()])
    tr = Transcript(2, 1)
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = rng.uniform(size=2)
        tr.append(None, p, p, np.array([1.0]))
    rep = bias_report(tr, ev)
    assert np.allclose(rep["on"]["bias"], 0.0)


def test_bias_report_hand_sum():
    # hand oracle: p=(1,0), y=(0,1) for 4 rounds, always-on event
    ev = EventCollection([_always()])
    tr = Transcript(2, 1)
    for _ in range(4):
        tr.append(None, np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                  np.array([1.0]))
    rep = bias_report(tr, ev)
    assert np.allclose(rep["on"]["bias"], [4.0, 4.0])
    assert rep["on"]["n"] == 4.0


def test_bias_report_inactive_event():
    ev = EventCollection([FunctionEvent("off", lambda pre, x, p: 0.0)])
    tr = Transcript(1, 1)
    for _ in range(5):
        tr.append(None, np.array([1.0]), np.array([0.0]), np.array([0.0]))
    rep = bias_report(tr, ev)
    assert rep["off"]["n"] == 0.0
    assert np.allclose(rep["off"]["bias"], 0.0)


def test_bias_report_empty_transcript_errors():
    with pytest.raises(ValueError):
        bias_report(Transcript(1, 1), EventCollection([_always()]))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=10 ** 6))
def test_transcript_incremental_matches_recompute(t, seed):
    rng = np.random.default_rng(seed)
    tr = Transcript(3, 2)
    for _ in range(t):
        tr.append(None, rng.uniform(size=3), rng.uniform(size=3),
                  rng.uniform(size=2))
    n, bias = tr.recompute()
    assert np.array_equal(n, tr.frequencies) or np.allclose(n, tr.frequencies, atol=1e-12)
    assert np.allclose(bias, tr.signed_bias, atol=1e-12)


# ---------------------------------------------------------------------------
# mixed predictions and event plumbing
# ---------------------------------------------------------------------------

def test_mixed_prediction_validation():
    with pytest.raises(ValueError):
        MixedPrediction(np.zeros((2, 1)), np.array([0.6, 0.6]))
    sp = PredictionSpace.box([0.0], [1.0])
    with pytest.raises(ValueError):
        MixedPrediction(np.array([[2.0]]), np.array([1.0]), space=sp)
    mp = MixedPrediction(np.array([[0.2], [0.8]]), np.array([0.5, 0.5]), space=sp)
    assert mp.mean() == pytest.approx(0.5)
    rng = np.random.default_rng(8)
    draws = [mp.sample(rng)[0] for _ in range(500)]
    assert 0.4 < np.mean(np.array(draws) > 0.5) < 0.6


def test_event_range_validation():
    bad = EventCollection([FunctionEvent("bad", lambda pre, x, p: 1.5)])
    with pytest.raises(ValueError):
        bad.eval_all(None, None, np.zeros(1))


def test_disjoint_spot_check():
    evs = EventCollection([_always(), _always()], disjoint=True)
    vals = evs.eval_all(None, None, np.zeros(1))
    with pytest.raises(ValueError):
        evs.check_disjoint(vals)


def test_reduction_layout_roundtrip():
    rng = np.random.default_rng(9)
    d, m = 3, 4
    q = rng.dirichlet(np.ones(2 * d * m))
    coef = fold_event_coeffs(q, d, m)
    # gains layout: sigma * E * (p - y)
    evals = rng.uniform(size=m)
    diff = rng.normal(size=d)
    g = reduction_gains(evals, diff)
    assert g.shape == (2 * d * m,)
    # algorithm gain contracts to <evals @ coef, diff>
    assert q @ g == pytest.approx(float((evals @ coef) @ diff), abs=1e-12)
