"""Per-slice downlink traffic generation.

Arrival streams for a whole episode are generated up front, deterministically
from a seed. One scheduling slot is 1 ms. Three service classes are modeled:

* VoNR: constant 40 B packets, per-user i.i.d. uniform interarrival.
* Video: truncated-Pareto interarrival and packet size.
* VR gaming: either a replayed trace file (CSV) or a synthetic stand-in
  (periodic frames with lognormal sizes, optionally alternating between a
  base and a boosted bitrate phase).

User counts per slice are drawn once per episode from a truncated Poisson.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, IngestionError

MS_PER_SLOT = 1.0


@dataclass(frozen=True)
class Request:
    """One downlink packet demand."""

    arrival_slot: int
    size_bytes: int
    slice_id: int
    user_id: int


@dataclass(frozen=True)
class UserCountLaw:
    """Truncated Poisson law for the per-episode user population of a slice.

    Draws are rejected until they fall in [min_count, max_count]; min_count
    defaults to 0, matching a plain upper truncation.
    """

    mean: float
    max_count: int
    min_count: int = 0

    def validate(self) -> None:
        if not (0 < self.mean <= self.max_count):
            raise ConfigurationError(
                f"user count law needs 0 < mean <= max, got mean={self.mean}, max={self.max_count}"
            )
        if not (0 <= self.min_count <= self.max_count):
            raise ConfigurationError(
                f"user count law needs 0 <= min <= max, got min={self.min_count}, max={self.max_count}"
            )

    def draw(self, rng: np.random.Generator) -> int:
        self.validate()
        while True:
            n = sample_user_count(self.mean, self.max_count, rng)
            if n >= self.min_count:
                return n


@dataclass(frozen=True)
class VoNRModel:
    interarrival_min_ms: float = 0.0
    interarrival_max_ms: float = 160.0
    packet_bytes: int = 40
    users: UserCountLaw = field(default_factory=lambda: UserCountLaw(70.0, 104))

    kind = "vonr"


@dataclass(frozen=True)
class VideoModel:
    interarrival_mean_ms: float = 6.0
    interarrival_max_ms: float = 12.5
    size_mean_bytes: float = 100.0
    size_max_bytes: float = 250.0
    pareto_shape: float = 1.2
    users: UserCountLaw = field(default_factory=lambda: UserCountLaw(20.0, 43))

    kind = "video"


@dataclass(frozen=True)
class VRSyntheticModel:
    """Synthetic stand-in for VR gaming traffic: periodic frames, lognormal sizes.

    When phase_period_slots > 0 the lognormal median alternates between
    frame_median_bytes and frame_median_bytes * phase_gain, emulating scene
    changes between bitrate regimes. The starting phase is drawn per episode.
    """

    frame_rate_fps: float = 72.0
    frame_median_bytes: float = 4000.0
    frame_sigma: float = 0.5
    phase_gain: float = 1.0
    phase_period_slots: int = 0
    users: UserCountLaw = field(default_factory=lambda: UserCountLaw(1.0, 7))

    kind = "vr_synthetic"


@dataclass(frozen=True)
class VRTraceModel:
    trace_path: str = ""
    users: UserCountLaw = field(default_factory=lambda: UserCountLaw(1.0, 7))

    kind = "vr_trace"


TrafficModel = Union[VoNRModel, VideoModel, VRSyntheticModel, VRTraceModel]


@dataclass
class SliceRequests:
    """Time-ordered packet stream of one slice, stored column-wise."""

    arrival_slot: np.ndarray  # int64
    size_bytes: np.ndarray  # int64
    user_id: np.ndarray  # int64
    user_count: int

    def __len__(self) -> int:
        return self.arrival_slot.shape[0]

    @property
    def total_bytes(self) -> int:
        return int(self.size_bytes.sum())


@dataclass
class EpisodeTraffic:
    """All request streams of one episode, plus the seed that produced them."""

    slices: list[SliceRequests]
    horizon_slots: int
    seed: int

    @property
    def slice_count(self) -> int:
        return len(self.slices)

    def requests(self, slice_id: int) -> Iterator[Request]:
        s = self.slices[slice_id]
        for i in range(len(s)):
            yield Request(int(s.arrival_slot[i]), int(s.size_bytes[i]), slice_id, int(s.user_id[i]))

    def demand_matrix(self, window_slots: int) -> np.ndarray:
        """Per-window, per-slice demanded bytes; shape (n_windows, S)."""
        n_windows = self.horizon_slots // window_slots
        out = np.zeros((n_windows, self.slice_count), dtype=np.int64)
        for sid, s in enumerate(self.slices):
            win = s.arrival_slot // window_slots
            keep = win < n_windows
            np.add.at(out[:, sid], win[keep], s.size_bytes[keep])
        return out


@lru_cache(maxsize=256)
def solve_pareto_scale(mean: float, max_value: float, shape: float) -> float:
    """Scale x_m of a Pareto(shape) clamped at max_value so that E[min(X, max)] == mean.

    The clamped mean is (shape*x_m - max*(x_m/max)**shape) / (shape - 1),
    strictly increasing in x_m from 0 to max_value, so a unique root exists
    for any 0 < mean < max_value.
    """
    if shape <= 1.0:
        raise ConfigurationError(
            f"no feasible scale for truncated pareto: mean={mean}, max={max_value}, shape={shape}"
            " (shape must exceed 1)"
        )
    if not (0.0 < mean < max_value):
        raise ConfigurationError(
            f"no feasible scale for truncated pareto: mean={mean}, max={max_value}, shape={shape}"
            " (requires 0 < mean < max)"
        )

    def clamped_mean_minus_target(x_m: float) -> float:
        return (shape * x_m - max_value * (x_m / max_value) ** shape) / (shape - 1.0) - mean

    lo = 0.5 * mean * (shape - 1.0) / shape
    hi = max_value * (1.0 - 1e-12)
    return float(brentq(clamped_mean_minus_target, lo, hi, xtol=1e-12, rtol=1e-14))


def truncated_pareto_clamped_mean(scale: float, max_value: float, shape: float) -> float:
    """Mean of min(X, max_value) for X ~ Pareto(shape, scale); analytic form."""
    return (shape * scale - max_value * (scale / max_value) ** shape) / (shape - 1.0)


def sample_truncated_pareto(
    mean: float,
    max_value: float,
    shape: float,
    rng: np.random.Generator,
    size: int | None = None,
):
    """Draw from a Pareto with its tail mass clamped at max_value.

    The scale is solved so the clamped distribution's mean equals `mean`;
    values lie in (scale, max_value].
    """
    x_m = solve_pareto_scale(mean, max_value, shape)
    n = 1 if size is None else size
    u = rng.random(n)
    u = np.maximum(u, np.finfo(np.float64).tiny)  # keep u in (0,1)
    x = np.minimum(x_m * u ** (-1.0 / shape), max_value)
    return float(x[0]) if size is None else x


def sample_user_count(mean: float, max_count: int, rng: np.random.Generator) -> int:
    """Truncated Poisson by rejection: redraw until the draw is <= max_count."""
    if not (0 < mean <= max_count):
        raise ConfigurationError(
            f"user count sampling needs 0 < mean <= max, got mean={mean}, max={max_count}"
        )
    while True:
        n = int(rng.poisson(mean))
        if n <= max_count:
            return n


def _renewal_arrival_times(draw_gaps, horizon_ms: float, mean_hint: float) -> np.ndarray:
    """Cumulative renewal times below horizon_ms; draw_gaps(n) yields interarrivals."""
    chunk = max(64, int(horizon_ms / max(mean_hint, 1e-9) * 1.2) + 16)
    times = np.cumsum(draw_gaps(chunk))
    while times.size and times[-1] < horizon_ms:
        more = np.cumsum(draw_gaps(chunk)) + times[-1]
        times = np.concatenate([times, more])
    return times[times < horizon_ms]


def _vonr_user_stream(model: VoNRModel, horizon: int, rng: np.random.Generator):
    mean = 0.5 * (model.interarrival_min_ms + model.interarrival_max_ms)
    times = _renewal_arrival_times(
        lambda n: rng.uniform(model.interarrival_min_ms, model.interarrival_max_ms, n),
        float(horizon),
        mean,
    )
    slots = np.floor(times).astype(np.int64)
    sizes = np.full(slots.shape, int(model.packet_bytes), dtype=np.int64)
    return slots, sizes


def _video_user_stream(model: VideoModel, horizon: int, rng: np.random.Generator):
    times = _renewal_arrival_times(
        lambda n: sample_truncated_pareto(
            model.interarrival_mean_ms, model.interarrival_max_ms, model.pareto_shape, rng, n
        ),
        float(horizon),
        model.interarrival_mean_ms,
    )
    slots = np.floor(times).astype(np.int64)
    raw = sample_truncated_pareto(
        model.size_mean_bytes, model.size_max_bytes, model.pareto_shape, rng, slots.size
    )
    sizes = np.maximum(1, np.rint(raw)).astype(np.int64)
    return slots, sizes


def _vr_synthetic_user_stream(model: VRSyntheticModel, horizon: int, rng: np.random.Generator):
    period = 1000.0 / model.frame_rate_fps
    offset = rng.uniform(0.0, period)
    count = int((horizon - offset) / period) + 1
    times = offset + period * np.arange(count)
    times = times[times < horizon]
    slots = np.floor(times).astype(np.int64)

    median = np.full(slots.shape, model.frame_median_bytes, dtype=np.float64)
    if model.phase_period_slots > 0 and model.phase_gain != 1.0:
        start_phase = int(rng.integers(0, 2))
        phase = (slots // model.phase_period_slots + start_phase) % 2
        median[phase == 1] *= model.phase_gain
    ln_sizes = np.log(median) + model.frame_sigma * rng.standard_normal(slots.size)
    sizes = np.maximum(1, np.rint(np.exp(ln_sizes))).astype(np.int64)
    return slots, sizes


def ingest_vr_trace(
    path: str,
    horizon_slots: int,
    user_count: int,
    rng: np.random.Generator,
    offsets: Sequence[float] | None = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Replay a VR trace CSV for user_count users, each from its own offset.

    The file format is `timestamp_ms,size_bytes` with a mandatory header,
    integer milliseconds and bytes, non-decreasing timestamps. Each user
    restarts the trace (wrap-around) with the mean inter-frame gap inserted
    at the seam; sizes are preserved exactly.
    """
    stamps: list[int] = []
    sizes: list[int] = []
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IngestionError(f"cannot open VR trace {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestionError(f"{path}: empty file, expected header timestamp_ms,size_bytes")
        if [h.strip() for h in header] != ["timestamp_ms", "size_bytes"]:
            raise IngestionError(
                f"{path}: line 1: bad header {header!r}, expected timestamp_ms,size_bytes"
            )
        for i, row in enumerate(reader):
            line_no = i + 2
            if not row:
                continue
            if len(row) != 2:
                raise IngestionError(f"{path}: line {line_no}: expected 2 fields, got {len(row)}")
            try:
                ts, sz = int(row[0]), int(row[1])
            except ValueError as exc:
                raise IngestionError(f"{path}: line {line_no}: unparsable row {row!r}") from exc
            if stamps and ts < stamps[-1]:
                raise IngestionError(
                    f"{path}: line {line_no}: non-monotone timestamp {ts} after {stamps[-1]}"
                )
            if sz <= 0:
                raise IngestionError(f"{path}: line {line_no}: non-positive size {sz}")
            stamps.append(ts)
            sizes.append(sz)
    if not stamps:
        raise IngestionError(f"{path}: no data rows")

    t = np.asarray(stamps, dtype=np.float64)
    s = np.asarray(sizes, dtype=np.int64)
    rel = t - t[0]
    span = rel[-1]
    mean_gap = span / (len(t) - 1) if len(t) > 1 else 1.0
    period = max(span + mean_gap, 1.0)

    streams: list[tuple[np.ndarray, np.ndarray]] = []
    for u in range(user_count):
        off = float(offsets[u]) if offsets is not None else float(rng.uniform(0.0, period))
        repeats = int((horizon_slots - off) / period) + 2
        all_times = (off + rel[None, :] + period * np.arange(repeats)[:, None]).ravel()
        all_sizes = np.tile(s, repeats)
        keep = all_times < horizon_slots
        slots = np.floor(all_times[keep]).astype(np.int64)
        streams.append((slots, all_sizes[keep]))
    return streams


def _slice_user_streams(
    model: TrafficModel, horizon: int, n_users: int, rng: np.random.Generator
) -> list[tuple[np.ndarray, np.ndarray]]:
    if isinstance(model, VRTraceModel):
        return ingest_vr_trace(model.trace_path, horizon, n_users, rng)
    streams = []
    for _ in range(n_users):
        if isinstance(model, VoNRModel):
            streams.append(_vonr_user_stream(model, horizon, rng))
        elif isinstance(model, VideoModel):
            streams.append(_video_user_stream(model, horizon, rng))
        elif isinstance(model, VRSyntheticModel):
            streams.append(_vr_synthetic_user_stream(model, horizon, rng))
        else:
            raise ConfigurationError(f"unknown traffic model {model!r}")
    return streams


def generate_episode(
    models: Sequence[TrafficModel], horizon_slots: int, seed: int
) -> EpisodeTraffic:
    """Generate the full episode traffic for every slice.

    Per-user arrival processes are generated independently and merged into a
    per-slice stream sorted by arrival slot (ties broken by user id, then by
    per-user order). Identical (models, horizon_slots, seed) yield
    bit-identical output.
    """
    if horizon_slots < 1:
        raise ConfigurationError(f"horizon_slots must be >= 1, got {horizon_slots}")
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(models))
    slices = []
    for model, child in zip(models, children):
        rng = np.random.default_rng(child)
        n_users = model.users.draw(rng)
        streams = _slice_user_streams(model, horizon_slots, n_users, rng)
        if streams:
            arrival = np.concatenate([st[0] for st in streams])
            size = np.concatenate([st[1] for st in streams])
            user = np.concatenate(
                [np.full(st[0].shape, u, dtype=np.int64) for u, st in enumerate(streams)]
            )
            seq = np.concatenate([np.arange(st[0].size, dtype=np.int64) for st in streams])
            order = np.lexsort((seq, user, arrival))
            arrival, size, user = arrival[order], size[order], user[order]
        else:
            arrival = np.empty(0, dtype=np.int64)
            size = np.empty(0, dtype=np.int64)
            user = np.empty(0, dtype=np.int64)
        slices.append(SliceRequests(arrival, size, user, n_users))
    return EpisodeTraffic(slices, horizon_slots, seed)


def default_models() -> list[TrafficModel]:
    """The three-slice configuration used throughout: VoNR, video, VR."""
    return [VoNRModel(), VideoModel(), VRSyntheticModel()]
