"""Experiment driver.

One run = one (scenario, seed): generate traffic, calibrate capacity if the
scenario asks for it, then loop the configured number of slicing windows
applying the guidance mode, collecting one record per window. Runs are pure
functions of (scenario, seed). Sweeps fan runs out over a process pool.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .agent import PpoAgent
from .env import EnvConfig, RanEnvironment
from .errors import ConfigurationError, IngestionError, SliceSimError
from .forecasting import ContributionOracle, apply_noise
from .guidance import (
    FORECAST_STATE,
    PLAIN_DRL,
    PURE_FORECAST,
    augmented_state,
    select_action,
)
from .scenario import Scenario
from .traffic import EpisodeTraffic, TrafficModel, generate_episode

# Seed-stream tags so the traffic, agent init, action sampling and forecast
# noise draw from independent generators. Traffic uses the bare run seed so
# every mode sees the identical episode.
_AGENT_INIT_STREAM = 1
_ACTION_STREAM = 2
_NOISE_STREAM = 3


@dataclass
class RunRecord:
    window: int
    kappa: np.ndarray
    action: np.ndarray
    reward: float
    latencies: np.ndarray
    distilled: bool
    distance: float
    epsilon: float


class RecordTable:
    """Column-wise store of one run's per-window records."""

    def __init__(self, n_slices: int, capacity: int = 0):
        self.n_slices = n_slices
        self.window = np.zeros(capacity, dtype=np.int64)
        self.kappa = np.zeros((capacity, n_slices))
        self.action = np.zeros((capacity, n_slices), dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.latencies = np.zeros((capacity, n_slices))
        self.distilled = np.zeros(capacity, dtype=bool)
        self.distance = np.zeros(capacity)
        self.epsilon = np.zeros(capacity)
        self.count = 0

    def _grow(self) -> None:
        new_cap = max(256, 2 * self.window.shape[0])
        for name in ("window", "kappa", "action", "reward", "latencies",
                     "distilled", "distance", "epsilon"):
            arr = getattr(self, name)
            shape = (new_cap,) + arr.shape[1:]
            bigger = np.zeros(shape, dtype=arr.dtype)
            bigger[: self.count] = arr[: self.count]
            setattr(self, name, bigger)

    def append(self, window: int, kappa, action, reward: float, latencies,
               distilled: bool, distance: float, epsilon: float) -> None:
        if self.count >= self.window.shape[0]:
            self._grow()
        i = self.count
        self.window[i] = window
        self.kappa[i] = kappa
        self.action[i] = action
        self.reward[i] = reward
        self.latencies[i] = latencies
        self.distilled[i] = distilled
        self.distance[i] = distance
        self.epsilon[i] = epsilon
        self.count += 1

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)[: self.count]

    def rows(self) -> Iterable[RunRecord]:
        for i in range(self.count):
            yield RunRecord(
                window=int(self.window[i]),
                kappa=self.kappa[i].copy(),
                action=self.action[i].copy(),
                reward=float(self.reward[i]),
                latencies=self.latencies[i].copy(),
                distilled=bool(self.distilled[i]),
                distance=float(self.distance[i]),
                epsilon=float(self.epsilon[i]),
            )

    def equals(self, other: "RecordTable") -> bool:
        if self.count != other.count or self.n_slices != other.n_slices:
            return False
        for name in ("window", "kappa", "action", "reward", "latencies",
                     "distilled", "distance", "epsilon"):
            if not np.array_equal(self.column(name), other.column(name)):
                return False
        return True


@dataclass
class RunSummary:
    scenario: str
    mode: str
    noise_std: float
    seed: int
    pattern: str = ""
    initial_reward: float = float("nan")
    converged: bool = False
    steps_to_converge: int | None = None
    convergence_rate: float = 0.0
    mean_reward_post: float | None = None
    trigger_rate: float = 0.0
    mean_reward_last2000: float = float("nan")
    mean_reward_post5000: float = float("nan")
    capacity_bytes_per_prb_slot: int = 0
    error: str | None = None


def detect_convergence(
    rewards: Sequence[float], window: int = 200, level: float = 0.9
) -> tuple[bool, int | None]:
    """First index from which every sliding-window mean stays >= level.

    Returns (converged, steps_to_converge); not converged when no such index
    exists or the sequence is shorter than the window.
    """
    r = np.asarray(rewards, dtype=np.float64)
    n = r.shape[0]
    if n < window:
        return False, None
    csum = np.concatenate([[0.0], np.cumsum(r)])
    means = (csum[window:] - csum[:-window]) / window  # means[t] over r[t:t+window]
    ok = means >= level
    # sustained to the end: all positions from t onward must hold
    suffix_ok = np.logical_and.accumulate(ok[::-1])[::-1]
    hits = np.nonzero(suffix_ok)[0]
    if hits.size == 0:
        return False, None
    return True, int(hits[0])


def calibrate_capacity(
    models: Sequence[TrafficModel],
    env_cfg: EnvConfig,
    target_load_ratio: float,
    probe_seeds: Sequence[int],
) -> int:
    """Capacity (bytes per unit per slot) hitting the requested load ratio.

    Traffic-only probe episodes are generated and the mean aggregate bytes
    per window measured; the returned capacity makes
    offered_load / (B * capacity * window_slots) equal the target.
    """
    if target_load_ratio <= 0:
        raise ConfigurationError(f"target load ratio must be > 0, got {target_load_ratio}")
    if not probe_seeds:
        raise ConfigurationError("at least one probe seed required")
    per_window = []
    horizon = env_cfg.window_slots * max(env_cfg.episode_windows, 1)
    for seed in probe_seeds:
        traffic = generate_episode(models, horizon, seed)
        per_window.append(traffic.demand_matrix(env_cfg.window_slots).sum(axis=1).mean())
    return _capacity_from_demand(float(np.mean(per_window)), env_cfg, target_load_ratio)


def capacity_from_episode(
    traffic: EpisodeTraffic, env_cfg: EnvConfig, target_load_ratio: float
) -> int:
    """Calibrate against one concrete episode (used by auto-calibrating runs)."""
    mean_bytes = float(traffic.demand_matrix(env_cfg.window_slots).sum(axis=1).mean())
    return _capacity_from_demand(mean_bytes, env_cfg, target_load_ratio)


def _capacity_from_demand(mean_bytes_per_window: float, env_cfg: EnvConfig,
                          target_load_ratio: float) -> int:
    if mean_bytes_per_window <= 0:
        raise ConfigurationError("calibration failed: measured demand is zero")
    capacity = mean_bytes_per_window / (
        env_cfg.total_bandwidth_units * env_cfg.window_slots * target_load_ratio
    )
    return max(1, int(round(capacity)))


def _summarize(sc: Scenario, seed: int, table: RecordTable, capacity: int) -> RunSummary:
    rewards = table.column("reward")
    converged, steps = detect_convergence(rewards, sc.convergence_window, sc.convergence_level)
    if converged:
        rate = 1.0 if steps == 0 else 1.0 / steps
        post = float(rewards[steps:].mean())
    else:
        rate = 0.0
        post = None
    k = min(sc.initial_windows, rewards.shape[0])
    return RunSummary(
        scenario=sc.name,
        mode=sc.guidance.mode,
        noise_std=sc.forecast.noise_std,
        seed=seed,
        pattern=sc.base_name,
        initial_reward=float(rewards[:k].mean()) if k else float("nan"),
        converged=converged,
        steps_to_converge=steps,
        convergence_rate=rate,
        mean_reward_post=post,
        trigger_rate=float(table.column("distilled").mean()) if table.count else 0.0,
        mean_reward_last2000=float(rewards[-2000:].mean()) if table.count else float("nan"),
        mean_reward_post5000=float(rewards[5000:].mean())
        if rewards.shape[0] > 5000
        else float("nan"),
        capacity_bytes_per_prb_slot=capacity,
    )


def run_single(sc: Scenario, seed: int) -> tuple[RunSummary, RecordTable]:
    """One fully deterministic run of a scenario under one seed."""
    sc.validate()
    mode = sc.guidance.mode
    env_cfg = replace(sc.env, slice_specs=list(sc.env.slice_specs))
    horizon_slots = (env_cfg.episode_windows + 1) * env_cfg.window_slots
    traffic = generate_episode(sc.traffic_models, horizon_slots, seed)
    if sc.calibrate_load_ratio is not None:
        env_cfg.capacity_bytes_per_prb_slot = capacity_from_episode(
            traffic, env_cfg, sc.calibrate_load_ratio
        )
    env = RanEnvironment(env_cfg, traffic)
    space = env.space
    n_slices = env_cfg.slice_count
    horizon = sc.forecast.horizon
    threshold = sc.guidance.threshold_units(env_cfg.total_bandwidth_units)

    agent = None
    if mode != PURE_FORECAST:
        state_dim = n_slices if mode != FORECAST_STATE else (horizon + 1) * n_slices
        agent = PpoAgent(
            sc.agent.build(state_dim, len(space)),
            np.random.default_rng(np.random.SeedSequence([seed, _AGENT_INIT_STREAM])),
        )
    action_rng = np.random.default_rng(np.random.SeedSequence([seed, _ACTION_STREAM]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, _NOISE_STREAM]))
    oracle = ContributionOracle(env.demand) if mode != PLAIN_DRL else None

    kappa, _ = env.reset()
    table = RecordTable(n_slices, capacity=env.agent_windows)
    pending: tuple | None = None
    for w in range(1, env.agent_windows + 1):
        step = w - 1
        forecast = None
        if oracle is not None:
            truth, zero_flags, truncated = oracle.future(w, horizon)
            forecast = apply_noise(
                truth, sc.forecast.noise_mean, sc.forecast.noise_std, noise_rng,
                zero_demand=zero_flags, truncated=truncated,
            )
        if agent is not None and pending is not None:
            next_state = (
                augmented_state(kappa, forecast, horizon)
                if mode == FORECAST_STATE
                else np.asarray(kappa, dtype=np.float64)
            )
            agent.observe(*pending, next_state)
        decision = select_action(
            mode, kappa, forecast, agent, space, threshold, step, action_rng, horizon
        )
        outcome = env.step_window(decision.chosen_action)
        table.append(
            window=w,
            kappa=kappa,
            action=decision.chosen_action,
            reward=outcome.reward,
            latencies=outcome.avg_latency_ms,
            distilled=decision.distilled,
            distance=decision.distance,
            epsilon=decision.epsilon,
        )
        if agent is not None:
            pending = (
                decision.agent_state,
                decision.chosen_index,
                decision.log_prob,
                outcome.reward,
            )
        kappa = outcome.kappa
    if agent is not None and pending is not None:
        agent.observe(*pending, pending[0])  # episode end: bootstrap on the last state

    return _summarize(sc, seed, table, env_cfg.capacity_bytes_per_prb_slot), table


def _run_spec(spec: tuple[Scenario, int]) -> tuple[RunSummary, RecordTable]:
    sc, seed = spec
    try:
        return run_single(sc, seed)
    except (ConfigurationError, IngestionError) as exc:
        summary = RunSummary(
            scenario=sc.name, mode=sc.guidance.mode, noise_std=sc.forecast.noise_std,
            seed=seed, pattern=sc.base_name, error=f"{type(exc).__name__}: {exc}",
        )
        return summary, RecordTable(sc.env.slice_count)


def run_scenario(
    sc: Scenario, seeds: Sequence[int] | None = None, parallel: int = 1
) -> list[tuple[RunSummary, RecordTable]]:
    """Run every seed of a scenario; failures are recorded, not raised."""
    use_seeds = list(seeds) if seeds is not None else list(sc.seeds)
    if not use_seeds:
        raise ConfigurationError(f"scenario {sc.name}: no seeds to run")
    return run_many([replace(sc, seeds=use_seeds)], parallel)


def run_many(
    scenarios: Sequence[Scenario], parallel: int = 1
) -> list[tuple[RunSummary, RecordTable]]:
    specs = [(sc, seed) for sc in scenarios for seed in sc.seeds]
    if parallel > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_run_spec, specs, chunksize=1))
    return [_run_spec(s) for s in specs]


def aggregate(summaries: Sequence[RunSummary]) -> dict:
    """Comparison table per (mode, noise) cell plus improvement ratios.

    Ratios compare forecast_aided against plain_drl as (x - y) / y; cells
    with no runs are simply absent.
    """
    cells: dict[tuple[str, float], dict] = {}
    for s in summaries:
        if s.error is not None:
            continue
        key = (s.mode, s.noise_std)
        cell = cells.setdefault(
            key,
            {"mode": s.mode, "noise_std": s.noise_std, "run_count": 0,
             "initial_rewards": [], "convergence_rates": [], "converged_count": 0},
        )
        cell["run_count"] += 1
        cell["initial_rewards"].append(s.initial_reward)
        cell["convergence_rates"].append(s.convergence_rate)
        cell["converged_count"] += int(s.converged)

    table = []
    for (mode, std), cell in sorted(cells.items()):
        table.append({
            "mode": mode,
            "noise_std": std,
            "run_count": cell["run_count"],
            "mean_initial_reward": float(np.mean(cell["initial_rewards"])),
            "mean_convergence_rate": float(np.mean(cell["convergence_rates"])),
            "converged_count": cell["converged_count"],
        })

    def ratio(x: float, y: float) -> float | None:
        return None if y == 0 else (x - y) / y

    improvements = {}
    by_key = {(row["mode"], row["noise_std"]): row for row in table}
    for (mode, std), row in by_key.items():
        if mode != "forecast_aided":
            continue
        base = by_key.get(("plain_drl", std))
        if base is None:
            continue
        improvements[f"noise_{std:g}"] = {
            "initial_reward": ratio(row["mean_initial_reward"], base["mean_initial_reward"]),
            "convergence_rate": ratio(row["mean_convergence_rate"], base["mean_convergence_rate"]),
            "converged_count": ratio(float(row["converged_count"]), float(base["converged_count"])),
        }
    return {"cells": table, "improvement_forecast_aided_vs_plain": improvements}
