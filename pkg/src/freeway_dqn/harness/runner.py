"""Training, evaluation, random-baseline and comparison drivers."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .. import nn
from ..agents.learner import Agent, Variant
from ..agents.replay import Transition
from ..errors import FreewayDQNError, TrainingDivergedError
from ..sim.config import Action
from ..sim.world import OBS_DIM, World, encode_observation, spawn_scenario, world_step
from . import seeding
from .config import RunConfig, save_config
from .params_io import load_params, save_params

log = logging.getLogger(__name__)

N_ACTIONS = len(Action)
METRICS_COLUMNS = ("episode", "steps", "cum_reward", "norm_reward", "disc_return", "mean_speed", "distance",
                   "mean_td_error", "mean_loss", "collision", "epsilon")
ACTION_COLUMNS = ("episode", "step", "action_index", "reward", "ego_speed", "ego_lane")
VARIANTS = (Variant.DQL, Variant.DDQL, Variant.DUELING, Variant.PER)


@dataclass
class MetricsRecord:
    episode: int
    steps: int
    cum_reward: float
    norm_reward: float
    disc_return: float
    mean_speed: float
    distance: float
    mean_td_error: float
    mean_loss: float
    collision: bool
    epsilon: float

    def row(self) -> list[str]:
        out = []
        for name in METRICS_COLUMNS:
            v = getattr(self, name)
            out.append(str(int(v)) if isinstance(v, bool) else repr(v) if isinstance(v, float) else str(v))
        return out


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in r:
            r[k] = int(r[k]) if k in ("episode", "steps", "collision") else float(r[k])
    return rows


# --- episodes ------------------------------------------------------------------------------


def scenario_world(cfg: RunConfig, stream_id: int, episode: int) -> World:
    """The world for ``episode`` of a given stream; identical for every variant."""
    seed = seeding.derive_seed(cfg.seed, stream_id, episode)
    scenario = replace(cfg.scenario, seed=seed)
    return spawn_scenario(scenario, cfg.road, seeding.generator(seed), idm=cfg.idm, mobil=cfg.mobil, gains=cfg.gains)


class _Episode:
    """Accumulates one episode's per-step measurements."""

    def __init__(self, gamma: float, max_steps: int):
        self.gamma = gamma
        self.max_steps = max_steps
        self.rewards: list[float] = []
        self.speeds: list[float] = []
        self.td: list[float] = []
        self.losses: list[float] = []
        self.distance = 0.0
        self.collision = False

    def record(self, result) -> None:
        self.rewards.append(result.reward)
        self.speeds.append(result.info.ego_speed)
        self.distance = result.info.distance
        self.collision = result.info.collision

    def finish(self, episode: int, epsilon: float) -> MetricsRecord:
        cum = math.fsum(self.rewards)
        disc = discounted_return(self.rewards, self.gamma)
        nan = float("nan")
        return MetricsRecord(
            episode=episode,
            steps=len(self.rewards),
            cum_reward=cum,
            norm_reward=cum / self.max_steps,
            disc_return=disc,
            mean_speed=float(np.mean(self.speeds)) if self.speeds else nan,
            distance=self.distance,
            mean_td_error=float(np.mean(self.td)) if self.td else nan,
            mean_loss=float(np.mean(self.losses)) if self.losses else nan,
            collision=self.collision,
            epsilon=float(epsilon),
        )


def discounted_return(rewards, gamma: float) -> float:
    """``sum_t gamma**t * r_t`` accumulated back to front."""
    disc = 0.0
    for r in reversed(list(rewards)):
        disc = r + gamma * disc
    return disc


class _CsvOut:
    def __init__(self, path, columns):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(columns)

    def write(self, row):
        self.writer.writerow(row)

    def close(self):
        self.fh.close()


def _prepare(cfg: RunConfig, out_dir) -> Path:
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.ini")
    return out


def make_agent(cfg: RunConfig) -> Agent:
    return Agent(cfg.agent, OBS_DIM, N_ACTIONS, rng=seeding.stream(cfg.seed, seeding.AGENT),
                 total_episodes=cfg.episodes, init_rng=seeding.stream(cfg.seed, seeding.AGENT_INIT))


# --- train -------------------------------------------------------------------------------------


@dataclass
class TrainOutputs:
    metrics: Path
    params: Path
    config: Path


def train(cfg: RunConfig, out_dir=None, progress=None) -> TrainOutputs:
    """Run ``cfg.episodes`` training episodes, writing ``metrics.csv``, ``params.txt`` and ``config.ini``."""
    out = _prepare(cfg, out_dir)
    agent = make_agent(cfg)
    metrics = _CsvOut(out / "metrics.csv", METRICS_COLUMNS)
    try:
        for episode in range(cfg.episodes):
            world = scenario_world(cfg, seeding.SCENARIO, episode)
            agent.begin_episode(episode)
            ep = _Episode(cfg.agent.gamma, cfg.scenario.max_steps)
            obs = encode_observation(world)
            while not world.terminated:
                action = agent.act(obs)
                result = world_step(world, action)
                agent.remember(Transition(obs, action, result.reward, result.observation, result.info.collision))
                ep.record(result)
                try:
                    stats = agent.train_step()
                except TrainingDivergedError as exc:
                    _diagnose(out, episode, world.steps, agent, exc)
                    raise
                if stats is not None:
                    ep.td.append(stats.mean_td_error)
                    ep.losses.append(stats.loss)
                obs = result.observation
            record = ep.finish(episode, agent.epsilon)
            metrics.write(record.row())
            if progress is not None:
                progress(record)
    finally:
        metrics.close()
    save_params(agent.online, out / "params.txt")
    return TrainOutputs(out / "metrics.csv", out / "params.txt", out / "config.ini")


def _diagnose(out: Path, episode: int, step: int, agent: Agent, exc: Exception) -> None:
    record = {"error": str(exc), "episode": episode, "step": step, "train_steps": agent.train_steps,
              "epsilon": agent.epsilon}
    (out / "diverged.json").write_text(json.dumps(record, indent=2) + "\n")


# --- evaluate ----------------------------------------------------------------------------------


@dataclass
class EvalOutputs:
    metrics: Path
    actions: Path


def expected_network(cfg: RunConfig) -> nn.QNetworkParams:
    """A throwaway network with the shape ``cfg`` trains, for load-time shape checks."""
    a = cfg.agent
    rng = np.random.default_rng(0)
    if a.variant is Variant.DUELING:
        return nn.default_dueling(rng, OBS_DIM, N_ACTIONS, a.dueling_trunk, a.dueling_head)
    return nn.default_plain(rng, OBS_DIM, N_ACTIONS, a.hidden)


def _run_policy_episodes(cfg: RunConfig, policy, stream_id: int, count: int, out: Path, prefix: str):
    metrics = _CsvOut(out / f"{prefix}metrics.csv", METRICS_COLUMNS)
    actions = _CsvOut(out / f"{prefix}actions.csv", ACTION_COLUMNS)
    try:
        for episode in range(count):
            world = scenario_world(cfg, stream_id, episode)
            ep = _Episode(cfg.agent.gamma, cfg.scenario.max_steps)
            obs = encode_observation(world)
            while not world.terminated:
                action = policy(obs)
                result = world_step(world, action)
                ep.record(result)
                actions.write([episode, world.steps - 1, action, repr(result.reward), repr(result.info.ego_speed),
                               result.info.ego_lane])
                obs = result.observation
            metrics.write(ep.finish(episode, 0.0).row())
    finally:
        metrics.close()
        actions.close()
    return EvalOutputs(out / f"{prefix}metrics.csv", out / f"{prefix}actions.csv")


def evaluate(params_path, cfg: RunConfig, out_dir=None) -> EvalOutputs:
    """Greedy rollouts of saved parameters on ``cfg.eval_episodes`` fresh scenarios. No learning."""
    net = load_params(params_path, expected=expected_network(cfg))
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)

    def greedy(obs):
        return int(np.argmax(nn.q_values(net, obs)[0]))

    return _run_policy_episodes(cfg, greedy, seeding.EVAL, cfg.eval_episodes, out, "eval_")


def evaluate_network(net: nn.QNetworkParams, cfg: RunConfig, out_dir) -> EvalOutputs:
    """Same as ``evaluate`` but for an in-memory network of any shape."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def greedy(obs):
        return int(np.argmax(nn.q_values(net, obs)[0]))

    return _run_policy_episodes(cfg, greedy, seeding.EVAL, cfg.eval_episodes, out, "eval_")


def random_baseline(cfg: RunConfig, episodes: int, out_dir, stream_id: int = seeding.SCENARIO,
                    prefix: str = "random_") -> EvalOutputs:
    """Uniform-random policy on the scenario schedule of ``stream_id`` (training spawns by default)."""
    rng = seeding.stream(cfg.seed, seeding.BASELINE, stream_id)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _run_policy_episodes(cfg, lambda obs: int(rng.integers(N_ACTIONS)), stream_id, episodes, out, prefix)


# --- compare -----------------------------------------------------------------------------------


SUMMARY_COLUMNS = (
    "variant", "episodes", "norm_reward_mean", "norm_reward_median", "norm_reward_min", "norm_reward_max",
    "leading30_norm_reward", "trailing30_norm_reward", "mean_speed", "distance_min", "distance_q1",
    "distance_median", "distance_q3", "distance_max", "collision_rate", "disc_return_mean",
    "eval_norm_reward_mean", "eval_collision_rate",
)


@dataclass
class VariantSummary:
    variant: str
    episodes: int
    norm_reward_mean: float
    norm_reward_median: float
    norm_reward_min: float
    norm_reward_max: float
    leading30_norm_reward: float
    trailing30_norm_reward: float
    mean_speed: float
    distance_min: float
    distance_q1: float
    distance_median: float
    distance_q3: float
    distance_max: float
    collision_rate: float
    disc_return_mean: float
    eval_norm_reward_mean: float
    eval_collision_rate: float


@dataclass
class ComparisonReport:
    variant_dirs: dict[str, Path]
    summary_path: Path
    series_path: Path
    baseline_metrics: Path
    baseline_eval_metrics: Path
    summaries: dict[str, VariantSummary]
    baseline_norm_reward_mean: float
    baseline_eval_collision_rate: float


def summarize(variant: str, train_rows: list[dict], eval_rows: list[dict], window: int = 30) -> VariantSummary:
    nan = float("nan")
    norm = np.array([r["norm_reward"] for r in train_rows])
    dist = np.array([r["distance"] for r in train_rows])
    coll = np.array([r["collision"] for r in train_rows])

    def stat(fn, arr):
        return float(fn(arr)) if arr.size else nan

    q = np.percentile(dist, [0, 25, 50, 75, 100]) if dist.size else [nan] * 5
    return VariantSummary(
        variant=variant,
        episodes=len(train_rows),
        norm_reward_mean=stat(np.mean, norm),
        norm_reward_median=stat(np.median, norm),
        norm_reward_min=stat(np.min, norm),
        norm_reward_max=stat(np.max, norm),
        leading30_norm_reward=stat(np.mean, norm[:window]),
        trailing30_norm_reward=stat(np.mean, norm[-window:]),
        mean_speed=stat(np.mean, np.array([r["mean_speed"] for r in train_rows])),
        distance_min=float(q[0]), distance_q1=float(q[1]), distance_median=float(q[2]),
        distance_q3=float(q[3]), distance_max=float(q[4]),
        collision_rate=stat(np.mean, coll),
        disc_return_mean=stat(np.mean, np.array([r["disc_return"] for r in train_rows])),
        eval_norm_reward_mean=stat(np.mean, np.array([r["norm_reward"] for r in eval_rows])),
        eval_collision_rate=stat(np.mean, np.array([r["collision"] for r in eval_rows])),
    )


def _variant_pipeline(cfg: RunConfig, out_dir: str) -> str:
    try:
        outputs = train(cfg, out_dir)
        evaluate(outputs.params, cfg, out_dir)
    except FreewayDQNError as exc:
        raise type(exc)(f"[{cfg.agent.variant.value}] {exc}") from exc
    return out_dir


def compare(cfg: RunConfig, out_dir=None, jobs: int = 1, baseline_episodes: int = 100) -> ComparisonReport:
    """Train and evaluate all four variants on one shared scenario schedule, plus a random baseline."""
    out = _prepare(cfg, out_dir)
    dirs = {v.value: out / v.value for v in VARIANTS}
    cfgs = {v.value: replace(cfg, agent=replace(cfg.agent, variant=v), output=str(dirs[v.value])) for v in VARIANTS}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_variant_pipeline, cfgs[k], str(dirs[k])) for k in dirs]
            baseline = random_baseline(cfg, baseline_episodes, out)
            base_eval = random_baseline(cfg, cfg.eval_episodes, out, seeding.EVAL, "random_eval_")
            for f in futures:
                f.result()
    else:
        for k in dirs:
            _variant_pipeline(cfgs[k], str(dirs[k]))
        baseline = random_baseline(cfg, baseline_episodes, out)
        base_eval = random_baseline(cfg, cfg.eval_episodes, out, seeding.EVAL, "random_eval_")

    summaries = {}
    series = {}
    for k, d in dirs.items():
        rows = read_metrics(d / "metrics.csv")
        summaries[k] = summarize(k, rows, read_metrics(d / "eval_metrics.csv"))
        series[k] = [r["disc_return"] for r in rows]

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries.values():
            w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(s).values()])

    series_path = out / "disc_return_series.csv"
    with open(series_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", *dirs])
        for e in range(cfg.episodes):
            w.writerow([e, *(repr(series[k][e]) for k in dirs)])

    base_rows = read_metrics(baseline.metrics)
    base_eval_rows = read_metrics(base_eval.metrics)
    return ComparisonReport(
        variant_dirs=dirs,
        summary_path=summary_path,
        series_path=series_path,
        baseline_metrics=baseline.metrics,
        baseline_eval_metrics=base_eval.metrics,
        summaries=summaries,
        baseline_norm_reward_mean=float(np.mean([r["norm_reward"] for r in base_rows])) if base_rows else float("nan"),
        baseline_eval_collision_rate=float(np.mean([r["collision"] for r in base_eval_rows])) if base_eval_rows else float("nan"),
    )
