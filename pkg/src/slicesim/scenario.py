"""Scenario and sweep files.

Scenarios are line-based `key = value` text with dotted section paths and
`#` comments, chosen for diff-ability. A sweep file crosses base scenarios
with guidance modes and forecast noise levels.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

from .agent import AgentConfig
from .env import EnvConfig, SliceSpec
from .errors import ConfigurationError
from .forecasting import ForecastConfig
from .guidance import MODES, GuidanceConfig
from .traffic import (
    TrafficModel,
    UserCountLaw,
    VideoModel,
    VoNRModel,
    VRSyntheticModel,
    VRTraceModel,
)


@dataclass
class AgentHyper:
    """Agent hyperparameters; state/action dimensions are filled in at run time."""

    learning_rate: float = 0.01
    batch_size: int = 4
    exploration_rate: float = 0.5
    exploration_decay: float = 0.5
    exploration_decay_steps: int = 200
    clip_ratio: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    epochs_per_update: int = 4
    hidden_units: tuple[int, ...] = (64, 64)
    entropy_coef: float = 0.0

    def build(self, state_dim: int, action_count: int) -> AgentConfig:
        return AgentConfig(
            state_dim=state_dim,
            action_count=action_count,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            exploration_rate=self.exploration_rate,
            exploration_decay=self.exploration_decay,
            exploration_decay_steps=self.exploration_decay_steps,
            clip_ratio=self.clip_ratio,
            discount=self.discount,
            gae_lambda=self.gae_lambda,
            epochs_per_update=self.epochs_per_update,
            hidden_units=self.hidden_units,
            entropy_coef=self.entropy_coef,
        )


@dataclass
class Scenario:
    name: str
    env: EnvConfig
    traffic_models: list[TrafficModel]
    forecast: ForecastConfig
    agent: AgentHyper
    guidance: GuidanceConfig
    seeds: list[int]
    calibrate_load_ratio: float | None = None
    convergence_window: int = 200
    convergence_level: float = 0.9
    initial_windows: int = 200
    base_name: str = ""  # pattern identity preserved across sweep-derived variants

    def __post_init__(self) -> None:
        if not self.base_name:
            self.base_name = self.name

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigurationError(f"scenario {self.name}: at least one seed required")
        self.env.validate()
        self.forecast.validate()
        self.guidance.validate()
        if len(self.traffic_models) != self.env.slice_count:
            raise ConfigurationError(
                f"scenario {self.name}: {len(self.traffic_models)} traffic models for "
                f"{self.env.slice_count} slices"
            )
        for m in self.traffic_models:
            m.users.validate()
            if isinstance(m, VRTraceModel) and not os.path.isfile(m.trace_path):
                raise ConfigurationError(
                    f"scenario {self.name}: VR trace file not found: {m.trace_path}"
                )
        if self.calibrate_load_ratio is not None and self.calibrate_load_ratio <= 0:
            raise ConfigurationError(
                f"scenario {self.name}: target load ratio must be > 0"
            )


def parse_kv_file(path: str) -> dict[str, str]:
    """Parse `key = value` lines; later duplicates override earlier ones."""
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    for i, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}: line {i}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


class _KeyReader:
    """Typed access over the parsed key/value map, tracking unknown keys."""

    def __init__(self, data: dict[str, str], path: str):
        self.data = data
        self.path = path
        self.used: set[str] = set()

    def _raw(self, key: str, default):
        self.used.add(key)
        if key in self.data:
            return self.data[key]
        if default is _REQUIRED:
            raise ConfigurationError(f"{self.path}: missing required key {key!r}")
        return default

    def get_str(self, key: str, default=None) -> str:
        v = self._raw(key, default)
        return v if isinstance(v, str) else v

    def get_int(self, key: str, default=None) -> int:
        v = self._raw(key, default)
        if isinstance(v, str):
            try:
                return int(v)
            except ValueError as exc:
                raise ConfigurationError(f"{self.path}: key {key!r}: not an integer: {v!r}") from exc
        return v

    def get_float(self, key: str, default=None) -> float:
        v = self._raw(key, default)
        if isinstance(v, str):
            try:
                return float(v)
            except ValueError as exc:
                raise ConfigurationError(f"{self.path}: key {key!r}: not a number: {v!r}") from exc
        return v

    def get_list(self, key: str, default=None) -> list[str]:
        v = self._raw(key, default)
        if isinstance(v, str):
            return [p.strip() for p in v.split(",") if p.strip()]
        return v

    def get_int_list(self, key: str, default=None) -> list[int]:
        items = self.get_list(key, default)
        try:
            return [int(x) for x in items]
        except ValueError as exc:
            raise ConfigurationError(f"{self.path}: key {key!r}: not integers: {items}") from exc

    def get_float_list(self, key: str, default=None) -> list[float]:
        items = self.get_list(key, default)
        try:
            return [float(x) for x in items]
        except ValueError as exc:
            raise ConfigurationError(f"{self.path}: key {key!r}: not numbers: {items}") from exc

    def check_all_used(self) -> None:
        unknown = set(self.data) - self.used
        if unknown:
            raise ConfigurationError(
                f"{self.path}: unknown keys: {', '.join(sorted(unknown))}"
            )


_REQUIRED = object()


def _slice_indices(data: dict[str, str], prefix: str) -> list[int]:
    idx = set()
    for key in data:
        parts = key.split(".")
        if len(parts) >= 2 and parts[0] == prefix and parts[1].isdigit():
            idx.add(int(parts[1]))
    return sorted(idx)


def _traffic_model(r: _KeyReader, i: int, base_dir: str) -> TrafficModel:
    p = f"traffic.{i}"
    kind = r.get_str(f"{p}.kind", _REQUIRED)
    users = UserCountLaw(
        mean=r.get_float(f"{p}.users_mean", _REQUIRED),
        max_count=r.get_int(f"{p}.users_max", _REQUIRED),
        min_count=r.get_int(f"{p}.users_min", 0),
    )
    if kind == "vonr":
        return VoNRModel(
            interarrival_min_ms=r.get_float(f"{p}.interarrival_min_ms", 0.0),
            interarrival_max_ms=r.get_float(f"{p}.interarrival_max_ms", 160.0),
            packet_bytes=r.get_int(f"{p}.packet_bytes", 40),
            users=users,
        )
    if kind == "video":
        return VideoModel(
            interarrival_mean_ms=r.get_float(f"{p}.interarrival_mean_ms", 6.0),
            interarrival_max_ms=r.get_float(f"{p}.interarrival_max_ms", 12.5),
            size_mean_bytes=r.get_float(f"{p}.size_mean_bytes", 100.0),
            size_max_bytes=r.get_float(f"{p}.size_max_bytes", 250.0),
            pareto_shape=r.get_float(f"{p}.pareto_shape", 1.2),
            users=users,
        )
    if kind == "vr_synthetic":
        return VRSyntheticModel(
            frame_rate_fps=r.get_float(f"{p}.frame_rate_fps", 72.0),
            frame_median_bytes=r.get_float(f"{p}.frame_median_bytes", 4000.0),
            frame_sigma=r.get_float(f"{p}.frame_sigma", 0.5),
            phase_gain=r.get_float(f"{p}.phase_gain", 1.0),
            phase_period_slots=r.get_int(f"{p}.phase_period_slots", 0),
            users=users,
        )
    if kind == "vr_trace":
        trace = r.get_str(f"{p}.trace_path", _REQUIRED)
        if not os.path.isabs(trace):
            trace = os.path.normpath(os.path.join(base_dir, trace))
        return VRTraceModel(trace_path=trace, users=users)
    raise ConfigurationError(
        f"{r.path}: traffic.{i}.kind: unknown kind {kind!r} "
        "(expected vonr, video, vr_synthetic or vr_trace)"
    )


def load_scenario(path: str) -> Scenario:
    data = parse_kv_file(path)
    r = _KeyReader(data, path)
    base_dir = os.path.dirname(os.path.abspath(path))
    default_name = os.path.splitext(os.path.basename(path))[0]
    name = r.get_str("name", default_name)
    seeds = r.get_int_list("seeds", _REQUIRED)

    slice_ids = _slice_indices(data, "slice")
    if not slice_ids or slice_ids != list(range(len(slice_ids))):
        raise ConfigurationError(f"{path}: slice sections must be numbered 0..S-1")
    specs = [
        SliceSpec(
            name=r.get_str(f"slice.{i}.name", f"slice{i}"),
            weight=r.get_float(f"slice.{i}.weight", _REQUIRED),
            sigmoid_slope=r.get_float(f"slice.{i}.sigmoid_slope", _REQUIRED),
            latency_threshold_ms=r.get_float(f"slice.{i}.latency_threshold_ms", _REQUIRED),
        )
        for i in slice_ids
    ]

    capacity_raw = r.get_str("env.capacity_bytes_per_prb_slot", "auto")
    calibrate_ratio: float | None = None
    if capacity_raw == "auto":
        capacity = 1  # placeholder, replaced by calibration
        calibrate_ratio = r.get_float("env.target_load_ratio", 1.2)
    else:
        try:
            capacity = int(capacity_raw)
        except ValueError as exc:
            raise ConfigurationError(
                f"{path}: env.capacity_bytes_per_prb_slot must be an integer or 'auto'"
            ) from exc
        r.get_float("env.target_load_ratio", None)  # tolerated but unused

    env = EnvConfig(
        total_bandwidth_units=r.get_int("env.total_bandwidth_units", 15),
        granularity_prbs_per_unit=r.get_int("env.granularity_prbs_per_unit", 2),
        min_units_per_slice=r.get_int("env.min_units_per_slice", 1),
        capacity_bytes_per_prb_slot=capacity,
        window_slots=r.get_int("env.window_slots", 100),
        episode_windows=r.get_int("env.episode_windows", 10_000),
        slice_specs=specs,
    )

    traffic_ids = _slice_indices(data, "traffic")
    if traffic_ids != slice_ids:
        raise ConfigurationError(f"{path}: traffic sections must match slice sections")
    models = [_traffic_model(r, i, base_dir) for i in traffic_ids]

    forecast = ForecastConfig(
        horizon=r.get_int("forecast.horizon", 1),
        history=r.get_int("forecast.history", 4),
        noise_std=r.get_float("forecast.noise_std", 0.0),
        noise_mean=r.get_float("forecast.noise_mean", 0.0),
    )
    hidden = tuple(r.get_int_list("agent.hidden_units", [64, 64]))
    agent = AgentHyper(
        learning_rate=r.get_float("agent.learning_rate", 0.01),
        batch_size=r.get_int("agent.batch_size", 4),
        exploration_rate=r.get_float("agent.exploration_rate", 0.5),
        exploration_decay=r.get_float("agent.exploration_decay", 0.5),
        exploration_decay_steps=r.get_int("agent.exploration_decay_steps", 200),
        clip_ratio=r.get_float("agent.clip_ratio", 0.2),
        discount=r.get_float("agent.discount", 0.99),
        gae_lambda=r.get_float("agent.gae_lambda", 0.95),
        epochs_per_update=r.get_int("agent.epochs_per_update", 4),
        hidden_units=hidden,
        entropy_coef=r.get_float("agent.entropy_coef", 0.0),
    )
    guidance = GuidanceConfig(
        mode=r.get_str("guidance.mode", "forecast_aided"),
        distance_threshold_fraction=r.get_float("guidance.distance_threshold_fraction", 0.07),
    )
    scenario = Scenario(
        name=name,
        env=env,
        traffic_models=models,
        forecast=forecast,
        agent=agent,
        guidance=guidance,
        seeds=seeds,
        calibrate_load_ratio=calibrate_ratio,
        convergence_window=r.get_int("convergence.window", 200),
        convergence_level=r.get_float("convergence.level", 0.9),
        initial_windows=r.get_int("metrics.initial_windows", 200),
    )
    r.check_all_used()
    scenario.validate()
    return scenario


def _noise_tag(std: float) -> str:
    return ("%g" % std).replace(".", "p").replace("-", "m")


def derive_scenario(base: Scenario, mode: str, noise_std: float,
                    seeds: list[int] | None = None) -> Scenario:
    """Variant of a base scenario with a different mode and forecast error."""
    if mode not in MODES:
        raise ConfigurationError(f"unknown guidance mode {mode!r}")
    return replace(
        base,
        name=f"{base.base_name}_{mode}_n{_noise_tag(noise_std)}",
        base_name=base.base_name,
        forecast=replace(base.forecast, noise_std=noise_std),
        guidance=replace(base.guidance, mode=mode),
        seeds=list(seeds) if seeds is not None else list(base.seeds),
    )


@dataclass
class Sweep:
    patterns: list[Scenario]
    modes: list[str]
    noise_stds: list[float]
    seeds: list[int] | None = None

    def expand(self) -> list[Scenario]:
        out = []
        for base in self.patterns:
            for mode in self.modes:
                for std in self.noise_stds:
                    out.append(derive_scenario(base, mode, std, self.seeds))
        return out


def load_sweep(path: str) -> Sweep:
    data = parse_kv_file(path)
    r = _KeyReader(data, path)
    base_dir = os.path.dirname(os.path.abspath(path))
    pattern_files = r.get_list("patterns", _REQUIRED)
    patterns = []
    for pf in pattern_files:
        full = pf if os.path.isabs(pf) else os.path.normpath(os.path.join(base_dir, pf))
        patterns.append(load_scenario(full))
    modes = r.get_list("modes", list(MODES))
    for m in modes:
        if m not in MODES:
            raise ConfigurationError(f"{path}: unknown mode {m!r} in sweep")
    noise_stds = r.get_float_list("noise_stds", [0.0])
    seeds = r.get_int_list("seeds", None) if "seeds" in data else None
    r.check_all_used()
    return Sweep(patterns=patterns, modes=modes, noise_stds=noise_stds, seeds=seeds)
