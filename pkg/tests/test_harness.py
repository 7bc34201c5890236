import csv
import json

import numpy as np
import pytest

from lowswitch.harness import runner
from lowswitch.mdp import save_mdp
from lowswitch.harness.config import ConfigError, config_from_dict, load_config
from lowswitch.harness.runner import RunSummary, run_experiment, summarize


def base_config(tmp_path, **extra):
    raw = {
        "env": {"type": "chain", "n_states": 4, "slip": 0.1, "gamma": 0.9},
        "algorithm": "main",
        "hyperparams": {"c_b": 0.5, "delta": 0.1, "T": 3000},
        "seeds": [0, 1],
        "output": {"dir": str(tmp_path / "out")},
    }
    raw.update(extra)
    return raw


def test_minimal_single_state_config(tmp_path):
    raw = {
        "env": {"type": "inline", "mdp": {"n_states": 1, "n_actions": 1, "gamma": 0.5,
                                           "transitions": [[[1.0]]], "rewards": [[0.5]]}},
        "algorithm": "main",
        "hyperparams": {"T": 10},
        "seeds": [0],
    }
    cfg = config_from_dict(raw, tmp_path)
    assert cfg.c_b == 2.0 and cfg.delta == 0.1 and cfg.T == 10
    assert cfg.output_dir == tmp_path / "out"
    mdp, sol = runner.prepare(cfg)
    assert sol.v_star[0] == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize(
    "patch, fragment",
    [
        ({"algorithm": "frobnicate"}, "algorithm"),
        ({"seeds": [1, 1]}, "duplicate"),
        ({"surprise": 1}, "surprise"),
        ({"hyperparams": {"T": 0}}, "hyperparams.T"),
        ({"hyperparams": {"T": 10, "c_b": "huge"}}, "c_b"),
        ({"env": {"type": "chain", "n_states": 1, "slip": 0.1, "gamma": 0.9}}, "env"),
    ],
)
def test_bad_configs_rejected(tmp_path, patch, fragment):
    with pytest.raises(ConfigError, match=fragment):
        config_from_dict(base_config(tmp_path, **patch), tmp_path)


def test_config_presets_and_threshold(tmp_path):
    cfg = config_from_dict(base_config(tmp_path, switch_threshold="inf",
                                       hyperparams={"T": 5, "c_b": "theory"}), tmp_path)
    assert cfg.c_b == 16.0 and cfg.switch_threshold == float("inf")
    assert cfg.canonical()["switch_threshold"] == "inf"


def test_load_config_reports_position(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"env": ,}')
    with pytest.raises(ConfigError, match=r"c.json:1:9"):
        load_config(path)


def test_config_hash_ignores_output_and_workers(tmp_path):
    a = config_from_dict(base_config(tmp_path), tmp_path)
    b = config_from_dict(base_config(tmp_path, workers=3, output={"dir": "elsewhere"}), tmp_path)
    c = config_from_dict(base_config(tmp_path, seeds=[0, 2]), tmp_path)
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_file_env_resolves_relative_to_config(tmp_path, chain6):
    (tmp_path / "envs").mkdir()
    save_mdp(chain6, tmp_path / "envs" / "m.json")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(base_config(tmp_path, env={"type": "file", "path": "envs/m.json"},
                                           hyperparams={"T": 100})))
    cfg = load_config(path)
    mdp, sol = runner.prepare(cfg)
    assert mdp.n_states == 6 and sol.residual <= 1e-10


def test_run_outputs_and_determinism(tmp_path):
    cfg = config_from_dict(base_config(tmp_path, seeds=[0, 1, 2, 3], workers=2), tmp_path)
    runs, summary = run_experiment(cfg)
    out = cfg.output_dir
    files = sorted(p.name for p in out.glob("trace_seed*.csv"))
    assert files == [f"trace_seed{i}.csv" for i in range(4)]
    assert len({r.stream_id for r in runs}) == 4
    assert set(summary) == {"config_hash", "runs", "aggregate", "theoretical_curve"}
    first = {p.name: p.read_bytes() for p in out.iterdir() if p.name != "timing.json"}

    cfg2 = cfg.with_overrides(workers=1)
    run_experiment(cfg2)
    second = {p.name: p.read_bytes() for p in out.iterdir() if p.name != "timing.json"}
    assert first == second


def test_trace_csv_contents(tmp_path):
    cfg = config_from_dict(base_config(tmp_path, seeds=[5]), tmp_path)
    runs, summary = run_experiment(cfg)
    with open(cfg.output_dir / "trace_seed5.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == runner.TRACE_HEADER
    assert len(rows) == 3001
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 3001))
    assert float(rows[-1][6]) == summary["runs"][0]["final_regret"]
    assert int(rows[-1][8]) == runs[0].switch_count
    switched = sum(int(r[5]) for r in rows[1:])
    assert switched == runs[0].switch_count


def test_downsampling_keeps_switch_rows(tmp_path, monkeypatch):
    monkeypatch.setattr(runner, "FULL_TRACE_STEPS", 500)
    cfg = config_from_dict(base_config(tmp_path, seeds=[0], hyperparams={"c_b": 0.005, "T": 3000}), tmp_path)
    runs, _ = run_experiment(cfg)
    with open(cfg.output_dir / "trace_seed0.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    steps = [int(r[0]) for r in rows]
    assert all(t % 6 == 0 or r[5] == "1" for t, r in zip(steps, rows))
    assert sum(int(r[5]) for r in rows) == runs[0].switch_count > 0
    assert steps[-1] == 3000


def test_seed_failure_is_isolated(tmp_path, monkeypatch):
    real = runner.execute_seed

    def flaky(config, mdp, solution, seed):
        if seed == 1:
            raise RuntimeError("boom")
        return real(config, mdp, solution, seed)

    monkeypatch.setattr(runner, "execute_seed", flaky)
    cfg = config_from_dict(base_config(tmp_path, seeds=[0, 1, 2]), tmp_path)
    runs, summary = run_experiment(cfg)
    assert [r.error is None for r in runs] == [True, False, True]
    assert "boom" in runs[1].error
    assert summary["aggregate"]["n_failed"] == 1
    assert summary["aggregate"]["final_regret"] is not None


def test_summarize_single_run():
    r = RunSummary(seed=0, stream_id="0:1", final_regret=10.0, regret_quarter=5.0, switch_count=3)
    agg = summarize([r])
    assert agg["final_regret"] == {"mean": 10.0, "min": 10.0, "max": 10.0, "std": 0.0}
    assert agg["regret_ratio"] == 2.0


def test_summarize_identical_runs_have_zero_spread():
    runs = [RunSummary(seed=i, stream_id=f"{i}:1", final_regret=7.5, regret_quarter=2.5) for i in range(4)]
    agg = summarize(runs)
    assert agg["final_regret"]["std"] == 0.0
    assert agg["regret_ratio"] == 3.0


def test_sqrt_curve_ratio_is_two():
    T = 40_000
    runs = [RunSummary(seed=0, stream_id="0:1", final_regret=np.sqrt(T), regret_quarter=np.sqrt(T // 4))]
    assert summarize(runs)["regret_ratio"] == pytest.approx(2.0)


def test_random_baseline_regret_is_linear(tmp_path):
    cfg = config_from_dict(base_config(tmp_path, algorithm="random", seeds=[0, 1, 2],
                                       hyperparams={"T": 20_000}), tmp_path)
    runs, summary = run_experiment(cfg)
    assert all(r.final_regret > 0 for r in runs)
    assert summary["aggregate"]["regret_ratio"] == pytest.approx(4.0, rel=0.15)


def test_theoretical_curve_is_increasing(tmp_path):
    cfg = config_from_dict(base_config(tmp_path, seeds=[0]), tmp_path)
    _, summary = run_experiment(cfg)
    values = [p["value"] for p in summary["theoretical_curve"]]
    assert len(values) == runner.CURVE_POINTS and np.all(np.diff(values) > 0)
    assert summary["theoretical_curve"][-1]["t"] == cfg.T
