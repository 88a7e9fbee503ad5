import json
import os

import numpy as np
import pytest

from eventcast.core import AlwaysOnEvent, EventCollection, PredictionSpace
from eventcast.harness.adversaries import make_adversary
from eventcast.harness.cli import main as cli_main
from eventcast.harness.config import ExperimentConfig
from eventcast.harness.ratefit import ratefit
from eventcast.harness.scenarios import run_experiment


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def test_config_roundtrip_and_hash():
    raw = {"scenario": "experts", "t_rounds": 100, "seeds": [1, 2]}
    cfg = ExperimentConfig.from_dict(raw)
    assert cfg.solver == "auto"
    h1 = cfg.config_hash()
    assert h1 == ExperimentConfig.from_dict(raw).config_hash()


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="config invalid"):
        ExperimentConfig.from_dict({"scenario": "experts", "t_rounds": 10,
                                    "seeds": [0], "bogus": 1})


def test_config_rejects_bad_scenario():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"scenario": "nope", "t_rounds": 10,
                                    "seeds": [0]})


def test_config_file_error_diagnostics(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text("{broken")
    with pytest.raises(ValueError, match="line 1"):
        ExperimentConfig.from_file(str(f))


# ---------------------------------------------------------------------------
# adversaries
# ---------------------------------------------------------------------------

def test_iid_outcomes_in_space():
    for sp in (PredictionSpace.box([-2, 0], [2, 5]), PredictionSpace.simplex(4)):
        adv = make_adversary("iid", sp, seed=3)
        for t in range(50):
            y = adv.outcome(t + 1, None, None, None)
            assert sp.contains_external(y, tol=1e-9)


def test_threshold_adversary_box_and_simplex():
    sp = PredictionSpace.box([0.0], [1.0])
    adv = make_adversary("threshold", sp, params={"theta": 0.5})
    assert adv.outcome(1, None, None, np.array([0.3]))[0] == 1.0
    assert adv.outcome(1, None, None, np.array([0.7]))[0] == 0.0
    sps = PredictionSpace.simplex(3)
    advs = make_adversary("threshold", sps)
    from eventcast.core import Transcript
    tr = Transcript(3, 0)
    tr.append(None, np.array([0.5, 0.2, 0.3]), np.array([0, 1.0, 0]),
              np.zeros(0))
    y = advs.outcome(2, tr, None, np.array([1 / 3] * 3))
    assert y.tolist() == [0.0, 1.0, 0.0]  # lowest recent prediction


def test_shift_adversary_stays_feasible():
    sp = PredictionSpace.box([-1, -1], [1, 1])
    adv = make_adversary("shift", sp, seed=1)
    for t in range(200):
        assert sp.contains_external(adv.outcome(t + 1, None, None, None))


def test_replay_adversary_from_file(tmp_path):
    f = tmp_path / "stream.csv"
    f.write_text("0.1,0.9\n0.4,0.6\n")
    sp = PredictionSpace.simplex(2)
    adv = make_adversary("replay", sp, params={"file": str(f)})
    assert np.allclose(adv.outcome(1, None, None, None), [0.1, 0.9])
    assert np.allclose(adv.outcome(2, None, None, None), [0.4, 0.6])
    with pytest.raises(ValueError, match="exhausted"):
        adv.outcome(3, None, None, None)
    bad = tmp_path / "bad.csv"
    bad.write_text("0.1,oops\n")
    with pytest.raises(ValueError, match="line 1"):
        make_adversary("replay", sp, params={"file": str(bad)})


def test_worstcase_events_adversary_targets_bias():
    sp = PredictionSpace.box([0.0], [1.0])
    events = EventCollection([AlwaysOnEvent()])
    adv = make_adversary("worstcase-events", sp, events=events,
                         params={"target_idx": 0, "coord": 0, "sign": 1})
    y = adv.outcome(1, None, None, np.array([0.8]))
    assert y[0] == 0.0  # pushes outcome low so (p - y) is large positive


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown adversary"):
        make_adversary("nope", PredictionSpace.box([0], [1]))


# ---------------------------------------------------------------------------
# ratefit
# ---------------------------------------------------------------------------

def test_ratefit_exact_powers():
    ts = np.array([100, 300, 1000, 3000, 10000], dtype=float)
    fit = ratefit(ts, 5.0 / np.sqrt(ts))
    assert fit.slope == pytest.approx(-0.5, abs=1e-9)
    fit2 = ratefit(ts, 2.0 / ts)
    assert fit2.slope == pytest.approx(-1.0, abs=1e-9)
    assert fit2.ci_low <= -1.0 <= fit2.ci_high


def test_ratefit_excludes_nonpositive():
    ts = np.array([10, 20, 40, 80, 160], dtype=float)
    vals = np.array([1.0, 0.5, 0.25, 0.125, -1.0])
    fit = ratefit(ts, vals)
    assert fit.n_excluded == 1
    assert fit.n_used == 4


def test_ratefit_needs_four_points():
    with pytest.raises(ValueError, match="at least 4"):
        ratefit([1, 2, 3], [1, 1, 1])


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

def _tiny_config(tmp_path, **over):
    raw = {"scenario": "calibration-1d", "t_rounds": 60, "seeds": [0, 1],
           "t_max": 1000, "out_dir": str(tmp_path / "run")}
    raw.update(over)
    return ExperimentConfig.from_dict(raw)


def test_run_writes_outputs_and_aggregates(tmp_path):
    cfg = _tiny_config(tmp_path)
    results, aggregate = run_experiment(cfg)
    assert {r.seed for r in results} == {0, 1}
    out = cfg.out_dir
    assert os.path.exists(f"{out}/manifest.json")
    assert os.path.exists(f"{out}/aggregate.json")
    assert os.path.exists(f"{out}/aggregate.csv")
    assert os.path.exists(f"{out}/seed_0/summary.json")
    assert os.path.exists(f"{out}/seed_0/series.csv")
    with open(f"{out}/aggregate.json") as fh:
        agg = json.load(fh)
    assert set(agg["final_abs_bias"]) == {"mean", "max", "min", "n"}
    with open(f"{out}/manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["config_hash"] == cfg.config_hash()
    assert "gap_summary" in manifest


def test_rerun_byte_identical(tmp_path):
    cfg1 = _tiny_config(tmp_path, out_dir=str(tmp_path / "a"))
    cfg2 = _tiny_config(tmp_path, out_dir=str(tmp_path / "b"))
    run_experiment(cfg1)
    run_experiment(cfg2)
    for name in ("aggregate.json", "aggregate.csv", "seed_0/summary.json",
                 "seed_0/series.csv", "seed_1/summary.json"):
        with open(f"{cfg1.out_dir}/{name}", "rb") as fh:
            a = fh.read()
        with open(f"{cfg2.out_dir}/{name}", "rb") as fh:
            b = fh.read()
        assert a == b, f"{name} differs between reruns"


def test_worker_pool_matches_sequential(tmp_path):
    cfg_seq = _tiny_config(tmp_path, out_dir=str(tmp_path / "s"))
    cfg_par = _tiny_config(tmp_path, out_dir=str(tmp_path / "p"), workers=2)
    _, agg_seq = run_experiment(cfg_seq)
    _, agg_par = run_experiment(cfg_par)
    assert agg_seq == agg_par


def test_wall_clock_budget_enforced(tmp_path):
    cfg = _tiny_config(tmp_path, wall_clock_budget=1e-6)
    with pytest.raises(RuntimeError, match="wall-clock budget"):
        run_experiment(cfg)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_run_and_report(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    out_dir = tmp_path / "out"
    cfg_path.write_text(json.dumps({
        "scenario": "calibration-1d", "t_rounds": 40, "seeds": [0],
        "t_max": 1000, "out_dir": str(out_dir)}))
    assert cli_main(["run", str(cfg_path)]) == 0
    captured = capsys.readouterr()
    assert "calibration-1d" in captured.out
    assert cli_main(["report", str(out_dir)]) == 0
    assert "final_abs_bias" in capsys.readouterr().out


def test_cli_ratefit(tmp_path, capsys):
    csv_path = tmp_path / "m.csv"
    rows = ["t,metric"] + [f"{t},{5.0 / t ** 0.5}" for t in
                           (100, 300, 1000, 3000)]
    csv_path.write_text("\n".join(rows))
    assert cli_main(["ratefit", str(csv_path), "--y", "metric"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["slope"] + 0.5) < 1e-6


def test_cli_validate_game(tmp_path, capsys):
    game = tmp_path / "g.txt"
    game.write_text("""
game 2
node root p1 - - infoset=R
node a terminal root l payoffs=1,0
node b terminal root r payoffs=0,1
""")
    assert cli_main(["validate-game", str(game)]) == 0
    out = capsys.readouterr().out
    assert "perfect_recall=True" in out
    bad = tmp_path / "bad.txt"
    bad.write_text("game 1\nnode root p1 - -\n")
    assert cli_main(["validate-game", str(bad)]) == 1
