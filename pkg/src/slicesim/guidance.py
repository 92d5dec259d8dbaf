"""Forecast-guided action selection.

Four allocation policies share an interface:

* forecast_aided: the policy acts, but when its action is too far (Euclidean
  distance above a threshold) from the forecast-suggested one, it is
  overwritten by the feasible action closest to their midpoint.
* forecast_state: the per-step forecast is appended to the agent state; the
  policy's action is never overwritten.
* plain_drl: the policy alone.
* pure_forecast: the forecast-suggested action alone, no agent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .agent import PpoAgent, exploration_rate
from .env import ActionSpace
from .errors import ConfigurationError
from .forecasting import Forecast, forecast_to_action

FORECAST_AIDED = "forecast_aided"
FORECAST_STATE = "forecast_state"
PLAIN_DRL = "plain_drl"
PURE_FORECAST = "pure_forecast"
MODES = (FORECAST_AIDED, FORECAST_STATE, PLAIN_DRL, PURE_FORECAST)


@dataclass(frozen=True)
class GuidanceConfig:
    mode: str = FORECAST_AIDED
    distance_threshold_fraction: float = 0.07

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown guidance mode {self.mode!r}, expected one of {MODES}")
        if not (0.0 <= self.distance_threshold_fraction <= 1.0):
            raise ConfigurationError(
                f"distance_threshold_fraction must be in [0,1], got {self.distance_threshold_fraction}"
            )

    def threshold_units(self, total_units: int) -> float:
        return self.distance_threshold_fraction * total_units


@dataclass
class GuidanceDecision:
    chosen_index: int
    chosen_action: np.ndarray
    policy_action: np.ndarray | None
    forecast_action: np.ndarray | None
    distance: float
    distilled: bool
    log_prob: float
    epsilon: float
    agent_state: np.ndarray | None = None


def action_distance(a: Sequence[int], b: Sequence[int]) -> float:
    """Euclidean distance between two allocation vectors, in allocation units."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ValueError(f"action length mismatch: {av.shape} vs {bv.shape}")
    return float(np.sqrt(((av - bv) ** 2).sum()))


def distill(
    a_pi: np.ndarray,
    a_forecast: np.ndarray,
    space: ActionSpace,
    threshold_units: float,
) -> tuple[np.ndarray, int, float, bool]:
    """Overwrite the policy action when it diverges too far from the forecast.

    Beyond the threshold, the chosen action is the feasible allocation
    closest to the elementwise midpoint of the two vectors; ties prefer the
    candidate closer to the forecast action, then the lower lexicographic
    index. Returns (chosen, chosen_index, distance, distilled).
    """
    pi_idx = space.index_of(a_pi)
    space.index_of(a_forecast)  # both must be members
    dist = action_distance(a_pi, a_forecast)
    if dist <= threshold_units:
        return space[pi_idx].copy(), pi_idx, dist, False
    midpoint = (np.asarray(a_pi, dtype=np.float64) + np.asarray(a_forecast, dtype=np.float64)) / 2.0
    diff_mid = space.actions - midpoint
    d2_mid = (diff_mid * diff_mid).sum(axis=1)
    diff_fc = space.actions - np.asarray(a_forecast, dtype=np.float64)
    d2_fc = (diff_fc * diff_fc).sum(axis=1)
    chosen_idx = int(np.lexsort((np.arange(len(space)), d2_fc, d2_mid))[0])
    return space[chosen_idx].copy(), chosen_idx, dist, True


def augmented_state(kappa: np.ndarray, forecast: Forecast, horizon: int) -> np.ndarray:
    """State of dimension (horizon + 1) * S: past contribution plus forecasts.

    Truncated forecasts near the episode end are padded by repeating their
    last row so the agent's input dimension stays fixed.
    """
    steps = forecast.per_step
    if steps.shape[0] < horizon:
        pad = np.repeat(steps[-1:], horizon - steps.shape[0], axis=0)
        steps = np.vstack([steps, pad])
    return np.concatenate([np.asarray(kappa, dtype=np.float64), steps[:horizon].ravel()])


def select_action(
    mode: str,
    kappa: np.ndarray,
    forecast: Forecast | None,
    agent: PpoAgent | None,
    space: ActionSpace,
    threshold_units: float,
    step: int,
    rng: np.random.Generator,
    horizon: int = 1,
) -> GuidanceDecision:
    """Pick the allocation for the upcoming window under the given mode."""
    if mode not in MODES:
        raise ConfigurationError(f"unknown guidance mode {mode!r}")
    needs_forecast = mode != PLAIN_DRL
    if needs_forecast and forecast is None:
        raise ValueError(f"mode {mode} requires a forecast")

    if mode == PURE_FORECAST:
        a_fc = forecast_to_action(forecast, space)
        idx = space.index_of(a_fc)
        return GuidanceDecision(
            chosen_index=idx, chosen_action=a_fc, policy_action=None,
            forecast_action=a_fc, distance=0.0, distilled=False,
            log_prob=0.0, epsilon=0.0, agent_state=None,
        )

    if agent is None:
        raise ValueError(f"mode {mode} requires an agent")
    eps = exploration_rate(agent.cfg, step)

    if mode == PLAIN_DRL:
        state = np.asarray(kappa, dtype=np.float64)
        idx, logp = agent.policy_action(state, step, rng)
        action = space[idx].copy()
        return GuidanceDecision(
            chosen_index=idx, chosen_action=action, policy_action=action,
            forecast_action=None, distance=0.0, distilled=False,
            log_prob=logp, epsilon=eps, agent_state=state,
        )

    if mode == FORECAST_STATE:
        state = augmented_state(kappa, forecast, horizon)
        idx, logp = agent.policy_action(state, step, rng)
        action = space[idx].copy()
        return GuidanceDecision(
            chosen_index=idx, chosen_action=action, policy_action=action,
            forecast_action=forecast_to_action(forecast, space), distance=0.0,
            distilled=False, log_prob=logp, epsilon=eps, agent_state=state,
        )

    # forecast_aided
    state = np.asarray(kappa, dtype=np.float64)
    pi_idx, logp = agent.policy_action(state, step, rng)
    a_pi = space[pi_idx].copy()
    a_fc = forecast_to_action(forecast, space)
    chosen, chosen_idx, dist, distilled = distill(a_pi, a_fc, space, threshold_units)
    if distilled:
        logp = agent.log_prob(state, chosen_idx)
    return GuidanceDecision(
        chosen_index=chosen_idx, chosen_action=chosen, policy_action=a_pi,
        forecast_action=a_fc, distance=dist, distilled=distilled,
        log_prob=logp, epsilon=eps, agent_state=state,
    )


def trigger_rate(decisions: Iterable) -> float:
    """Fraction of decisions where distillation overwrote the policy action."""
    flags = [bool(d.distilled if isinstance(d, GuidanceDecision) else d) for d in decisions]
    if not flags:
        raise ValueError("trigger_rate of an empty decision sequence")
    return sum(flags) / len(flags)
