"""Downlink base-station simulation.

Per-slice FIFO queues are drained by a round-robin scheduler every 1 ms slot
according to the PRB allocation in force; PRBs are reallocated once per
slicing window. The environment reports per-window demand contributions
(the agent state) and a weighted-sigmoid latency reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from . import _kernel
from .errors import ConfigurationError
from .traffic import EpisodeTraffic


@dataclass(frozen=True)
class SliceSpec:
    """Reward shaping constants of one slice.

    sigmoid_slope (per ms) controls how quickly the reward term decays once
    the window's average latency passes latency_threshold_ms.
    """

    name: str
    weight: float
    sigmoid_slope: float
    latency_threshold_ms: float


@dataclass
class EnvConfig:
    total_bandwidth_units: int = 15
    granularity_prbs_per_unit: int = 2
    min_units_per_slice: int = 1
    capacity_bytes_per_prb_slot: int = 200
    window_slots: int = 100
    episode_windows: int = 10_000
    slice_specs: list[SliceSpec] = field(default_factory=list)

    @property
    def slice_count(self) -> int:
        return len(self.slice_specs)

    def validate(self) -> None:
        s = self.slice_count
        if s < 1:
            raise ConfigurationError("at least one slice spec required")
        if self.total_bandwidth_units < s * self.min_units_per_slice:
            raise ConfigurationError(
                f"bandwidth of {self.total_bandwidth_units} units cannot give "
                f"{s} slices {self.min_units_per_slice} unit(s) each"
            )
        if self.window_slots < 1:
            raise ConfigurationError("window_slots must be >= 1")
        if self.capacity_bytes_per_prb_slot < 1:
            raise ConfigurationError("capacity_bytes_per_prb_slot must be >= 1")
        weights = sum(sp.weight for sp in self.slice_specs)
        if abs(weights - 1.0) > 1e-9:
            raise ConfigurationError(f"slice weights must sum to 1, got {weights}")
        for sp in self.slice_specs:
            if sp.weight < 0:
                raise ConfigurationError(f"slice {sp.name}: negative weight")
            if sp.latency_threshold_ms <= 0:
                raise ConfigurationError(f"slice {sp.name}: latency threshold must be > 0")


@dataclass
class WindowOutcome:
    """Everything observed from one served slicing window."""

    window_index: int
    avg_latency_ms: np.ndarray
    served_bytes: np.ndarray
    queued_bytes_end: np.ndarray
    demand_bytes: np.ndarray
    kappa: np.ndarray
    zero_demand: bool
    reward: float
    departed: np.ndarray


def enumerate_actions(
    total_units: int, n_slices: int, min_units: int = 1
) -> np.ndarray:
    """All integer compositions of total_units into n_slices parts >= min_units.

    Rows are in ascending lexicographic order; the row count is
    C(total - n*min + n - 1, n - 1).
    """
    if total_units < n_slices * min_units:
        raise ConfigurationError(
            f"cannot split {total_units} units into {n_slices} parts of >= {min_units}"
        )
    rows: list[list[int]] = []

    def rec(prefix: list[int], remaining: int, parts_left: int) -> None:
        if parts_left == 1:
            rows.append(prefix + [remaining])
            return
        top = remaining - min_units * (parts_left - 1)
        for v in range(min_units, top + 1):
            rec(prefix + [v], remaining - v, parts_left - 1)

    rec([], total_units, n_slices)
    return np.asarray(rows, dtype=np.int64)


class ActionSpace:
    """Enumerated PRB allocations with index lookup."""

    def __init__(self, total_units: int, n_slices: int, min_units: int = 1):
        self.total_units = total_units
        self.n_slices = n_slices
        self.min_units = min_units
        self.actions = enumerate_actions(total_units, n_slices, min_units)
        self._index = {tuple(row): i for i, row in enumerate(self.actions.tolist())}

    def __len__(self) -> int:
        return self.actions.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.actions[i]

    def index_of(self, action: Sequence[int]) -> int:
        key = tuple(int(v) for v in action)
        if key not in self._index:
            raise ValueError(f"action {key} not in the action space")
        return self._index[key]

    def contains(self, action: Sequence[int]) -> bool:
        return tuple(int(v) for v in action) in self._index

    def uniform_action(self) -> np.ndarray:
        """Equal split, remainder to the lowest slice indices."""
        base, extra = divmod(self.total_units, self.n_slices)
        out = np.full(self.n_slices, base, dtype=np.int64)
        out[:extra] += 1
        return out

    def validate_action(self, action: np.ndarray) -> np.ndarray:
        a = np.asarray(action, dtype=np.int64)
        if a.shape != (self.n_slices,):
            raise ValueError(f"action must have shape ({self.n_slices},), got {a.shape}")
        if int(a.sum()) != self.total_units or (a < self.min_units).any():
            raise ValueError(
                f"invalid allocation {a.tolist()}: must sum to {self.total_units} "
                f"with every entry >= {self.min_units}"
            )
        return a


def compute_contribution(demand_bytes: np.ndarray) -> tuple[np.ndarray, bool]:
    """Per-slice share of total demanded bytes; uniform sentinel when total is 0."""
    d = np.asarray(demand_bytes, dtype=np.float64)
    if (d < 0).any():
        raise ValueError("demand must be non-negative")
    total = d.sum()
    if total == 0:
        return np.full(d.shape, 1.0 / d.size), True
    return d / total, False


def compute_reward(latencies_ms: np.ndarray, specs: Sequence[SliceSpec]) -> float:
    """Weighted sum of inverse-sigmoid latency terms, one per slice.

    Each term is 1 / (1 + exp(slope * (latency - threshold))); with weights
    summing to 1 the reward lies in (0, 1) and is strictly decreasing in
    every slice's latency.
    """
    lat = np.asarray(latencies_ms, dtype=np.float64)
    r = 0.0
    for l_s, sp in zip(lat, specs):
        r += sp.weight * float(expit(-sp.sigmoid_slope * (l_s - sp.latency_threshold_ms)))
    return r


class RanEnvironment:
    """Stateful single-BS simulator driven window by window.

    reset() consumes window 0 under a uniform allocation as warm-up so the
    first decision already has a past-window contribution state; step(action)
    then serves windows 1, 2, ... in order.
    """

    def __init__(self, cfg: EnvConfig, traffic: EpisodeTraffic):
        cfg.validate()
        if traffic.slice_count != cfg.slice_count:
            raise ConfigurationError(
                f"traffic has {traffic.slice_count} slices, config has {cfg.slice_count}"
            )
        self.cfg = cfg
        self.traffic = traffic
        self.space = ActionSpace(
            cfg.total_bandwidth_units, cfg.slice_count, cfg.min_units_per_slice
        )
        self.total_windows = traffic.horizon_slots // cfg.window_slots
        if self.total_windows < 1:
            raise ConfigurationError("traffic shorter than a single window")
        self.demand = traffic.demand_matrix(cfg.window_slots)

        self._pkt_arrival = []
        self._pkt_size = []
        self._user_pkt = []
        self._user_start = []
        self._user_head = []
        self._head_remaining = []
        self._state = []
        for s in traffic.slices:
            arrival = np.ascontiguousarray(s.arrival_slot, dtype=np.int64)
            size = np.ascontiguousarray(s.size_bytes, dtype=np.int64)
            n_users = max(1, s.user_count)
            counts = np.bincount(s.user_id, minlength=n_users) if len(s) else np.zeros(
                n_users, dtype=np.int64
            )
            user_start = np.zeros(n_users + 1, dtype=np.int64)
            np.cumsum(counts, out=user_start[1:])
            user_pkt = (
                np.argsort(s.user_id, kind="stable").astype(np.int64)
                if len(s)
                else np.empty(0, dtype=np.int64)
            )
            self._pkt_arrival.append(arrival)
            self._pkt_size.append(size)
            self._user_pkt.append(user_pkt)
            self._user_start.append(user_start)
            self._user_head.append(np.zeros(n_users, dtype=np.int64))
            self._head_remaining.append(np.zeros(n_users, dtype=np.int64))
            self._state.append(np.zeros(4, dtype=np.int64))
        self._next_window = 0

    @property
    def agent_windows(self) -> int:
        """Number of windows steppable after the warm-up window."""
        return self.total_windows - 1

    def reset(self) -> tuple[np.ndarray, bool]:
        """Clear queues, serve the warm-up window uniformly, return its contribution."""
        need = self.cfg.window_slots * self.cfg.episode_windows
        if self.traffic.horizon_slots < need:
            raise ConfigurationError(
                f"traffic horizon {self.traffic.horizon_slots} slots is shorter than "
                f"episode_windows * window_slots = {need}"
            )
        for sid in range(self.cfg.slice_count):
            self._user_head[sid][:] = 0
            self._state[sid][:] = 0
            hr = self._head_remaining[sid]
            hr[:] = 0
            start = self._user_start[sid]
            has_pkt = start[:-1] < start[1:]
            if has_pkt.any():
                first = self._user_pkt[sid][start[:-1][has_pkt]]
                hr[has_pkt] = self._pkt_size[sid][first]
        self._next_window = 0
        outcome = self._serve(self.space.uniform_action())
        return outcome.kappa, outcome.zero_demand

    def step_window(self, action: np.ndarray) -> WindowOutcome:
        """Serve the next window under `action` and report what happened."""
        if self._next_window == 0:
            raise RuntimeError("call reset() before step_window()")
        if self._next_window >= self.total_windows:
            raise RuntimeError("episode exhausted")
        return self._serve(action)

    step = step_window

    def _serve(self, action: np.ndarray) -> WindowOutcome:
        a = self.space.validate_action(action)
        w = self._next_window
        cfg = self.cfg
        s_count = cfg.slice_count
        window_start = w * cfg.window_slots

        avg_lat = np.zeros(s_count)
        served = np.zeros(s_count, dtype=np.int64)
        queued = np.zeros(s_count, dtype=np.int64)
        departed = np.zeros(s_count, dtype=np.int64)
        for sid in range(s_count):
            budget = int(a[sid]) * cfg.capacity_bytes_per_prb_slot
            sv, lat_sum, lat_count, dep, oldest = _kernel.serve_window(
                self._pkt_arrival[sid],
                self._pkt_size[sid],
                self._user_pkt[sid],
                self._user_start[sid],
                self._user_head[sid],
                self._head_remaining[sid],
                self._state[sid],
                np.int64(window_start),
                np.int64(cfg.window_slots),
                np.int64(budget),
            )
            served[sid] = sv
            departed[sid] = dep
            queued[sid] = self._state[sid][_kernel.QUEUED_BYTES]
            if lat_count > 0:
                avg_lat[sid] = float(lat_sum) / float(lat_count)
            elif oldest >= 0:
                # no departures: fall back to the head-of-line packet's age
                avg_lat[sid] = float(window_start + cfg.window_slots - 1 - oldest + 1)
            else:
                avg_lat[sid] = 0.0

        demand = self.demand[w].copy()
        kappa, zero_demand = compute_contribution(demand)
        reward = compute_reward(avg_lat, cfg.slice_specs)
        self._next_window = w + 1
        return WindowOutcome(
            window_index=w,
            avg_latency_ms=avg_lat,
            served_bytes=served,
            queued_bytes_end=queued,
            demand_bytes=demand,
            kappa=kappa,
            zero_demand=zero_demand,
            reward=reward,
            departed=departed,
        )
