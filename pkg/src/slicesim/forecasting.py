"""Mocked traffic forecaster.

A trained forecaster is imitated by reading the pre-generated episode's
future demand contributions (the ground truth) and corrupting them with
i.i.d. Gaussian error in contribution space. Noisy vectors are repaired by
clamping to [0, 1] and renormalizing so downstream consumers always see a
simplex vector. A forecast is turned into a PRB allocation by
largest-remainder apportionment over the horizon-averaged contribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ActionSpace
from .errors import ConfigurationError
from .traffic import EpisodeTraffic


@dataclass(frozen=True)
class ForecastConfig:
    horizon: int = 1
    history: int = 4  # carried for interface fidelity; the oracle does not need it
    noise_std: float = 0.0
    noise_mean: float = 0.0

    def validate(self) -> None:
        if self.horizon < 1:
            raise ConfigurationError(f"forecast horizon must be >= 1, got {self.horizon}")
        if self.noise_std < 0:
            raise ConfigurationError(f"noise std must be >= 0, got {self.noise_std}")


@dataclass
class Forecast:
    """Noisy per-window contribution forecasts plus their horizon mean."""

    per_step: np.ndarray  # (horizon, S), each row on the simplex
    aggregated: np.ndarray  # (S,)
    truncated: bool = False
    zero_demand: np.ndarray | None = None  # per-step ground-truth sentinel flags


class ContributionOracle:
    """Exact future contributions, read off the pre-generated episode."""

    def __init__(self, demand_matrix: np.ndarray):
        self.demand = np.asarray(demand_matrix)
        self.n_windows = self.demand.shape[0]
        self.n_slices = self.demand.shape[1]

    @classmethod
    def from_traffic(cls, traffic: EpisodeTraffic, window_slots: int) -> "ContributionOracle":
        return cls(traffic.demand_matrix(window_slots))

    def future(self, window_index: int, horizon: int) -> tuple[np.ndarray, np.ndarray, bool]:
        """Realized contributions for windows [window_index, window_index + horizon).

        A horizon reaching past the episode end is truncated to the remaining
        windows and flagged. Returns (vectors, zero_demand_flags, truncated).
        """
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        if not (0 <= window_index < self.n_windows):
            raise ValueError(
                f"window_index {window_index} outside episode of {self.n_windows} windows"
            )
        end = window_index + horizon
        truncated = end > self.n_windows
        end = min(end, self.n_windows)
        block = self.demand[window_index:end].astype(np.float64)
        totals = block.sum(axis=1)
        zero = totals == 0
        out = np.empty_like(block)
        out[zero] = 1.0 / self.n_slices
        nz = ~zero
        out[nz] = block[nz] / totals[nz, None]
        return out, zero, truncated


def oracle_future_contribution(
    traffic: EpisodeTraffic, window_index: int, horizon: int, window_slots: int
) -> tuple[np.ndarray, np.ndarray, bool]:
    """One-shot convenience wrapper around ContributionOracle.future."""
    return ContributionOracle.from_traffic(traffic, window_slots).future(window_index, horizon)


def apply_noise(
    truth: np.ndarray,
    noise_mean: float,
    noise_std: float,
    rng: np.random.Generator,
    zero_demand: np.ndarray | None = None,
    truncated: bool = False,
) -> Forecast:
    """Corrupt ground-truth contribution vectors with Gaussian error.

    Noise is added per slice per step, then each vector is clamped to [0, 1]
    and renormalized to sum 1 (uniform if everything clamps to zero). With
    zero noise the input is passed through untouched.
    """
    if noise_std < 0:
        raise ValueError(f"noise std must be >= 0, got {noise_std}")
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if noise_std == 0.0 and noise_mean == 0.0:
        per_step = truth.copy()
    else:
        noisy = truth + rng.normal(noise_mean, noise_std, size=truth.shape)
        per_step = np.clip(noisy, 0.0, 1.0)
        sums = per_step.sum(axis=1)
        dead = sums == 0
        per_step[dead] = 1.0 / truth.shape[1]
        live = ~dead
        per_step[live] /= sums[live, None]
    aggregated = per_step.mean(axis=0)
    aggregated = aggregated / aggregated.sum()
    return Forecast(per_step=per_step, aggregated=aggregated, truncated=truncated,
                    zero_demand=zero_demand)


def apportion_units(kappa: np.ndarray, space: ActionSpace) -> np.ndarray:
    """Integer allocation proportional to kappa by largest remainder.

    Every slice is first given the minimum floor; the rest is split on
    quotas kappa * remaining with fractional-part ties going to the lowest
    slice index. The result is always a member of the action space.
    """
    k = np.asarray(kappa, dtype=np.float64)
    n = space.n_slices
    spare = space.total_units - n * space.min_units
    quotas = k * spare
    base = np.floor(quotas).astype(np.int64)
    extra = spare - int(base.sum())
    frac = quotas - base
    # highest fractional part first, lowest index on ties
    order = np.lexsort((np.arange(n), -frac))
    bonus = np.zeros(n, dtype=np.int64)
    bonus[order[:extra]] = 1
    return space.min_units + base + bonus


def forecast_to_action(forecast: Forecast, space: ActionSpace) -> np.ndarray:
    """Suggested allocation for a forecast: apportion its aggregated vector."""
    if len(space) == 0:
        raise ValueError("empty action space")
    return apportion_units(forecast.aggregated, space)
