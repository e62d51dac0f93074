import csv
import re
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freeway_dqn import nn
from freeway_dqn.agents.learner import AgentConfig, Variant
from freeway_dqn.errors import (
    ArchitectureMismatchError,
    ConfigError,
    MalformedFileError,
    VersionMismatchError,
)
from freeway_dqn.harness import cli, runner, seeding
from freeway_dqn.harness.config import RunConfig, dumps_config, load_config, loads_config
from freeway_dqn.harness.params_io import dumps_params, load_params, loads_params, save_params
from freeway_dqn.sim.config import Action

from conftest import random_net


def small_cfg(**kw):
    agent = AgentConfig(batch_size=8, capacity=200, hidden=(16,), dueling_trunk=16, dueling_head=8, lr=0.01,
                        target_sync=5)
    return replace(RunConfig(agent=agent, episodes=3, eval_episodes=2), **kw)


def read_actions(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config --------------------------------------------------------------------------


def test_default_config_values():
    cfg = RunConfig()
    assert cfg.episodes == 2000 and cfg.eval_episodes == 10
    assert cfg.road.lane_count == 3 and cfg.scenario.surrounding_count == 15
    assert cfg.agent.gamma == 0.8 and cfg.agent.lr == 0.2


def test_config_round_trip():
    cfg = small_cfg(seed=99)
    cfg = replace(cfg, agent=replace(cfg.agent, variant=Variant.PER))
    assert loads_config(dumps_config(cfg)) == cfg


def test_config_partial_file_keeps_defaults():
    cfg = loads_config("[agent]\nlr = 0.01  # tuned\n[run]\nepisodes = 300\n")
    assert cfg.agent.lr == 0.01 and cfg.episodes == 300 and cfg.agent.gamma == 0.8


@pytest.mark.parametrize("text, line, needle", [
    ("[agent]\nlr = 0.1\nbogus = 3\n", 3, "bogus"),
    ("[agent]\n\ngamma = lots\n", 3, "gamma"),
    ("[run]\nepisodes = 1\n[nowhere]\nx = 1\n", 3, "nowhere"),
    ("[agent]\ngamma = 1.5\n", 1, "agent"),
    ("lr = 0.1\n", 1, ""),
])
def test_config_errors_name_line(text, line, needle):
    with pytest.raises(ConfigError, match=rf"line {line}:.*{needle}"):
        loads_config(text)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_shipped_configs_parse():
    from pathlib import Path

    for path in sorted((Path(__file__).parent.parent / "configs").glob("*.ini")):
        load_config(path)


# --- parameter files --------------------------------------------------------------------


@pytest.mark.parametrize("arch", ["plain", "dueling"])
def test_params_round_trip_bitwise(tmp_path, arch):
    net = random_net(np.random.default_rng(1), arch, obs_dim=6, n_actions=5)
    save_params(net, tmp_path / "a.txt")
    loaded = load_params(tmp_path / "a.txt")
    for (na, a), (nb, b) in zip(net.arrays(), loaded.arrays()):
        assert na == nb and a.tobytes() == b.tobytes()
    save_params(loaded, tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


@settings(max_examples=50)
@given(values=st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=6, max_size=6))
def test_params_any_float_round_trips(values):
    from conftest import linear_net

    net = linear_net(np.reshape(values[:4], (2, 2)), values[4:])
    back = loads_params(dumps_params(net))
    assert back.weights["layers"][0].tobytes() == net.weights["layers"][0].tobytes()
    assert back.biases["layers"][0].tobytes() == net.biases["layers"][0].tobytes()


def test_params_truncated():
    text = dumps_params(random_net(np.random.default_rng(2), obs_dim=4, n_actions=3))
    lines = text.splitlines()
    for cut in range(len(lines)):
        with pytest.raises(MalformedFileError):
            loads_params("\n".join(lines[:cut]) + "\n")
    with pytest.raises(MalformedFileError):
        loads_params(text[: len(text) // 2])


def test_params_version_mismatch():
    text = dumps_params(random_net(np.random.default_rng(2)))
    with pytest.raises(VersionMismatchError, match="line 1"):
        loads_params(text.replace("freeway-dqn-params 1", "freeway-dqn-params 2", 1))


def test_params_malformed_value_names_line():
    lines = dumps_params(random_net(np.random.default_rng(2))).splitlines()
    idx = next(i for i, s in enumerate(lines) if s.startswith("param"))
    lines[idx] = lines[idx].rsplit(" ", 1)[0] + " abc"
    with pytest.raises(MalformedFileError, match=f"line {idx + 1}"):
        loads_params("\n".join(lines) + "\n")


def test_params_architectures_mutually_rejected():
    rng = np.random.default_rng(3)
    plain = dumps_params(random_net(rng, "plain"))
    duel = dumps_params(random_net(rng, "dueling"))
    with pytest.raises(ArchitectureMismatchError):
        loads_params(plain, architecture="DUELING")
    with pytest.raises(ArchitectureMismatchError):
        loads_params(duel, architecture="PLAIN")


def test_params_shape_mismatch_names_both(tmp_path):
    save_params(nn.make_plain([30, 8, 5], np.random.default_rng(0)), tmp_path / "p.txt")
    with pytest.raises(ArchitectureMismatchError, match=r"30x8.*30x128"):
        load_params(tmp_path / "p.txt", expected=runner.expected_network(RunConfig()))


# --- seeding ---------------------------------------------------------------------------------


def test_seed_streams_independent_and_stable():
    assert seeding.derive_seed(7, 0, 1) == seeding.derive_seed(7, 0, 1)
    seeds = {seeding.derive_seed(7, s, e) for s in range(5) for e in range(50)}
    assert len(seeds) == 250
    a = seeding.stream(7, seeding.AGENT).random(4)
    np.testing.assert_array_equal(a, seeding.stream(7, seeding.AGENT).random(4))


# --- train ---------------------------------------------------------------------------------------


def test_train_zero_episodes(tmp_path):
    cfg = small_cfg(episodes=0)
    out = runner.train(cfg, tmp_path)
    assert out.metrics.read_text() == ",".join(runner.METRICS_COLUMNS) + "\n"
    initial = runner.make_agent(cfg).online
    assert out.params.read_text() == dumps_params(initial)
    assert loads_config(out.config.read_text()) == cfg


@pytest.mark.parametrize("variant", list(Variant))
def test_train_byte_identical_reruns(tmp_path, variant):
    cfg = small_cfg(seed=5)
    cfg = replace(cfg, agent=replace(cfg.agent, variant=variant))
    a = runner.train(cfg, tmp_path / "a")
    b = runner.train(cfg, tmp_path / "b")
    assert a.metrics.read_bytes() == b.metrics.read_bytes()
    assert a.params.read_bytes() == b.params.read_bytes()
    c = runner.train(replace(cfg, seed=6), tmp_path / "c")
    assert a.metrics.read_bytes() != c.metrics.read_bytes()


def test_metric_coherence(tmp_path):
    cfg = small_cfg(episodes=6, seed=2)
    rows = runner.read_metrics(runner.train(cfg, tmp_path).metrics)
    assert [r["episode"] for r in rows] == list(range(6))
    for r in rows:
        assert 1 <= r["steps"] <= 100
        assert r["distance"] <= 40.0 * r["steps"] / cfg.scenario.policy_hz
        if r["steps"] < 100:
            assert r["collision"] == 1
        if not r["collision"]:
            assert r["steps"] == 100
        assert r["norm_reward"] == r["cum_reward"] / 100
        assert r["norm_reward"] * 100 == pytest.approx(r["cum_reward"], rel=1e-15)
        assert 0.0 <= r["norm_reward"] <= 1.0
        assert 0.0 <= r["disc_return"] <= r["cum_reward"] + 1e-12
        assert 0.0 <= r["epsilon"] <= 1.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_diverged_run_leaves_diagnostic(tmp_path):
    cfg = small_cfg(episodes=30)
    cfg = replace(cfg, agent=replace(cfg.agent, lr=1e12, grad_clip=1e300, batch_size=2))
    with pytest.raises(Exception) as info:
        runner.train(cfg, tmp_path)
    assert info.value.kind == "training_diverged"
    assert "train_steps" in (tmp_path / "diverged.json").read_text()


def test_discounted_return_helper():
    assert runner.discounted_return([1.0, 1.0, 1.0], 0.5) == 1.75
    assert runner.discounted_return([], 0.8) == 0.0


# --- evaluate ---------------------------------------------------------------------------------------


def test_eval_deterministic_and_bounded(tmp_path):
    cfg = small_cfg(eval_episodes=3)
    trained = runner.train(cfg, tmp_path / "t")
    a = runner.evaluate(trained.params, cfg, tmp_path / "a")
    b = runner.evaluate(trained.params, cfg, tmp_path / "b")
    assert a.actions.read_bytes() == b.actions.read_bytes()
    assert a.metrics.read_bytes() == b.metrics.read_bytes()
    rows = runner.read_metrics(a.metrics)
    assert len(rows) == 3
    assert all(0.0 <= r["norm_reward"] <= 1.0 and r["epsilon"] == 0.0 for r in rows)
    actions = read_actions(a.actions)
    assert {int(r["action_index"]) for r in actions} <= {a.value for a in Action}


def test_discounted_return_matches_action_log(tmp_path):
    cfg = small_cfg(eval_episodes=4)
    trained = runner.train(cfg, tmp_path / "t")
    out = runner.evaluate(trained.params, cfg, tmp_path / "e")
    steps = read_actions(out.actions)
    for row in runner.read_metrics(out.metrics):
        rewards = [float(s["reward"]) for s in steps if int(s["episode"]) == row["episode"]]
        assert [int(s["step"]) for s in steps if int(s["episode"]) == row["episode"]] == list(range(len(rewards)))
        disc = sum(cfg.agent.gamma ** t * r for t, r in enumerate(rewards))
        assert abs(disc - row["disc_return"]) <= 1e-9
        assert len(rewards) == row["steps"]


def keep_right_then_speed_up():
    """Linear policy: move right until the rightmost lane, otherwise push FASTER."""
    w = np.zeros((5, 30))
    b = np.full(5, -100.0)
    w[Action.LANE_RIGHT, 2] = -10.0  # ego lateral feature y / (K * width)
    b[Action.LANE_RIGHT] = 7.5
    b[Action.FASTER] = 0.5
    spec = nn.LayerSpec(30, 5, nn.Activation.LINEAR)
    return nn.QNetworkParams("PLAIN", {"layers": [spec]}, {"layers": [w]}, {"layers": [b]})


def test_scripted_policy_on_empty_road(tmp_path):
    cfg = small_cfg(eval_episodes=10)
    cfg = replace(cfg, scenario=replace(cfg.scenario, surrounding_count=0), agent=replace(cfg.agent, hidden=()))
    save_params(keep_right_then_speed_up(), tmp_path / "script.txt")
    out = runner.evaluate(tmp_path / "script.txt", cfg, tmp_path / "e")
    rows = runner.read_metrics(out.metrics)
    assert all(r["steps"] == 100 and not r["collision"] for r in rows)
    assert min(r["norm_reward"] for r in rows) >= 0.9


def test_eval_rejects_wrong_architecture(tmp_path):
    cfg = small_cfg()
    trained = runner.train(cfg, tmp_path / "t")
    duel = replace(cfg, agent=replace(cfg.agent, variant=Variant.DUELING))
    with pytest.raises(ArchitectureMismatchError):
        runner.evaluate(trained.params, duel, tmp_path / "e")


def test_random_baseline_reproducible(tmp_path):
    cfg = small_cfg()
    a = runner.random_baseline(cfg, 3, tmp_path / "a")
    b = runner.random_baseline(cfg, 3, tmp_path / "b")
    assert a.actions.read_bytes() == b.actions.read_bytes()


# --- compare ----------------------------------------------------------------------------------------


def test_compare_structure_and_shared_scenarios(tmp_path, monkeypatch):
    spawns = {}
    original = runner.scenario_world

    def spy(cfg, stream_id, episode):
        world = original(cfg, stream_id, episode)
        if stream_id == seeding.SCENARIO:
            key = (cfg.agent.variant.value, episode)
            spawns[key] = [(v.x_c, v.y_c, v.v) for v in world.vehicles]
        return world

    monkeypatch.setattr(runner, "scenario_world", spy)
    cfg = small_cfg(episodes=2)
    report = runner.compare(cfg, tmp_path, baseline_episodes=2)

    with open(report.summary_path, newline="") as fh:
        summary = list(csv.DictReader(fh))
    assert [r["variant"] for r in summary] == ["dql", "ddql", "dueling", "per"]
    assert set(report.summaries) == {"dql", "ddql", "dueling", "per"}
    for e in range(2):
        ref = spawns[("dql", e)]
        assert all(spawns[(v, e)] == ref for v in ("ddql", "dueling", "per"))
    with open(report.series_path, newline="") as fh:
        series = list(csv.reader(fh))
    assert series[0] == ["episode", "dql", "ddql", "dueling", "per"] and len(series) == 3
    for d in report.variant_dirs.values():
        assert (d / "metrics.csv").exists() and (d / "eval_actions.csv").exists()
    assert 0.0 <= report.baseline_eval_collision_rate <= 1.0


def test_summary_statistics():
    rows = [{"norm_reward": r, "distance": d, "collision": c, "mean_speed": 20.0, "disc_return": 1.0}
            for r, d, c in [(0.1, 10.0, 1), (0.2, 20.0, 1), (0.3, 30.0, 0), (0.4, 40.0, 0), (0.5, 50.0, 1)]]
    s = runner.summarize("dql", rows, rows[:2], window=2)
    assert s.leading30_norm_reward == pytest.approx(0.15) and s.trailing30_norm_reward == pytest.approx(0.45)
    assert (s.distance_min, s.distance_q1, s.distance_median, s.distance_q3, s.distance_max) == (10, 20, 30, 40, 50)
    assert s.collision_rate == pytest.approx(0.6) and s.eval_collision_rate == 1.0


# --- command line --------------------------------------------------------------------------------------


ERROR_LINE = re.compile(r'^error kind=[a-z_]+ message=".*"$')


def test_cli_train_and_eval(tmp_path, capsys):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text(dumps_config(small_cfg()))
    assert cli.main(["train", "--config", str(cfg_path), "--episodes", "1", "--seed", "4",
                     "--out", str(tmp_path / "t")]) == 0
    resolved = load_config(tmp_path / "t" / "config.ini")
    assert resolved.episodes == 1 and resolved.seed == 4
    assert cli.main(["eval", "--config", str(cfg_path), "--params", str(tmp_path / "t" / "params.txt"),
                     "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "eval_actions.csv").exists()


def test_cli_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[agent]\nlr = fast\n")
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path / "t")]) == 2
    err = capsys.readouterr().err.strip()
    assert ERROR_LINE.match(err) and "kind=config" in err and "line 2" in err


def test_cli_eval_errors(tmp_path, capsys):
    assert cli.main(["eval", "--params", str(tmp_path / "missing.txt"), "--out", str(tmp_path)]) == 1
    assert ERROR_LINE.match(capsys.readouterr().err.strip())
    save_params(nn.make_plain([30, 4, 5], np.random.default_rng(0)), tmp_path / "p.txt")
    assert cli.main(["eval", "--params", str(tmp_path / "p.txt"), "--variant", "dueling", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert ERROR_LINE.match(err) and "params_architecture" in err


def test_cli_rejects_unknown_variant():
    with pytest.raises(SystemExit) as info:
        cli.main(["train", "--variant", "rainbow"])
    assert info.value.code != 0
