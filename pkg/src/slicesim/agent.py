"""From-scratch PPO over a discrete allocation action space.

Small feed-forward policy and value networks (numpy, hand-written backprop,
Adam), generalized advantage estimation, and a clipped surrogate objective.
An epsilon schedule is layered on top of the stochastic policy: with
probability eps(step) the action is drawn uniformly instead of from the
policy, but its log-probability is still evaluated under the current policy
so updates stay well-defined.

Output layers are zero-initialized: a fresh policy is exactly uniform and a
fresh value function is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass
class AgentConfig:
    state_dim: int
    action_count: int
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

    def validate(self) -> None:
        if not (0.0 <= self.exploration_rate <= 1.0):
            raise ConfigurationError(f"exploration_rate must be in [0,1], got {self.exploration_rate}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.state_dim < 1 or self.action_count < 1:
            raise ConfigurationError("state_dim and action_count must be >= 1")


def exploration_rate(cfg: AgentConfig, step: int) -> float:
    """eps(step) = eps0 * decay ** floor(step / decay_steps)."""
    return cfg.exploration_rate * cfg.exploration_decay ** (step // cfg.exploration_decay_steps)


@dataclass
class TransitionBatch:
    """Aligned on-policy rollout buffers for one update."""

    states: np.ndarray
    action_indices: np.ndarray
    behavior_log_probs: np.ndarray
    rewards: np.ndarray
    value_estimates: np.ndarray
    bootstrap_value: float
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """Tanh MLP with a linear head and explicit forward/backward passes."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, zero_output: bool = True):
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            last = i == len(sizes) - 2
            if last and zero_output:
                w = np.zeros((fan_in, fan_out))
            else:
                w = _orthogonal(rng, fan_in, fan_out, gain=np.sqrt(2.0))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns the linear head output and the activation cache for backward()."""
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = [h]
        n = len(self.weights)
        for i in range(n - 1):
            h = np.tanh(h @ self.weights[i] + self.biases[i])
            cache.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, cache

    def backward(self, cache: list[np.ndarray], dout: np.ndarray) -> list[np.ndarray]:
        """Gradients for every weight and bias, ordered [w0, b0, w1, b1, ...]."""
        grads: list[np.ndarray] = []
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            grads.append(delta.sum(axis=0))  # bias
            grads.append(cache[i].T @ delta)  # weight
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - cache[i] ** 2)
        grads.reverse()
        return grads

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        for i in range(len(self.weights)):
            self.weights[i] = np.array(params[2 * i], dtype=np.float64)
            self.biases[i] = np.array(params[2 * i + 1], dtype=np.float64)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat_params(self, flat: np.ndarray) -> None:
        out = []
        pos = 0
        for p in self.params:
            out.append(flat[pos : pos + p.size].reshape(p.shape))
            pos += p.size
        self.set_params(out)


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


CHECKPOINT_VERSION = 1


class PpoAgent:
    def __init__(self, cfg: AgentConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        layer_sizes = [cfg.state_dim, *cfg.hidden_units]
        self.policy = Mlp([*layer_sizes, cfg.action_count], rng, zero_output=True)
        self.value = Mlp([*layer_sizes, 1], rng, zero_output=True)
        self._policy_opt = Adam(self.policy.params, cfg.learning_rate)
        self._value_opt = Adam(self.value.params, cfg.learning_rate)
        self._buffer: list[tuple[np.ndarray, int, float, float, float]] = []
        self.updates_done = 0
        self.updates_aborted = 0

    # ---- acting ----------------------------------------------------------

    def policy_probs(self, state: np.ndarray) -> np.ndarray:
        logits, _ = self.policy.forward(state)
        return np.exp(_log_softmax(logits))[0]

    def log_prob(self, state: np.ndarray, action_index: int) -> float:
        logits, _ = self.policy.forward(state)
        return float(_log_softmax(logits)[0, action_index])

    def policy_action(self, state: np.ndarray, step: int, rng: np.random.Generator) -> tuple[int, float]:
        """Sample an action; with probability eps(step) it is uniform random.

        The returned log-probability is the current policy's, whichever
        branch produced the action.
        """
        state = np.asarray(state, dtype=np.float64)
        if state.ravel().shape[0] != self.cfg.state_dim:
            raise ValueError(
                f"state has dimension {state.ravel().shape[0]}, expected {self.cfg.state_dim}"
            )
        eps = exploration_rate(self.cfg, step)
        logits, _ = self.policy.forward(state)
        log_probs = _log_softmax(logits)[0]
        if eps > 0.0 and rng.random() < eps:
            action = int(rng.integers(self.cfg.action_count))
        else:
            probs = np.exp(log_probs)
            u = rng.random()
            action = int(np.searchsorted(np.cumsum(probs), u))
            action = min(action, self.cfg.action_count - 1)
        return action, float(log_probs[action])

    def value_estimate(self, state: np.ndarray) -> float:
        out, _ = self.value.forward(state)
        return float(out[0, 0])

    # ---- learning --------------------------------------------------------

    def observe(self, state, action_index: int, log_prob: float, reward: float,
                next_state) -> dict | None:
        """Buffer one transition; runs an update when the batch fills."""
        self._buffer.append(
            (np.asarray(state, dtype=np.float64), int(action_index), float(log_prob),
             float(reward), self.value_estimate(state))
        )
        if len(self._buffer) < self.cfg.batch_size:
            return None
        batch = TransitionBatch(
            states=np.stack([b[0] for b in self._buffer]),
            action_indices=np.array([b[1] for b in self._buffer], dtype=np.int64),
            behavior_log_probs=np.array([b[2] for b in self._buffer]),
            rewards=np.array([b[3] for b in self._buffer]),
            value_estimates=np.array([b[4] for b in self._buffer]),
            bootstrap_value=self.value_estimate(next_state),
        )
        self._buffer.clear()
        return self.update(batch)

    def compute_gae(self, batch: TransitionBatch) -> None:
        """Fill batch.advantages and batch.returns in place."""
        cfg = self.cfg
        n = batch.rewards.shape[0]
        values_ext = np.append(batch.value_estimates, batch.bootstrap_value)
        adv = np.zeros(n)
        running = 0.0
        for i in range(n - 1, -1, -1):
            delta = batch.rewards[i] + cfg.discount * values_ext[i + 1] - values_ext[i]
            running = delta + cfg.discount * cfg.gae_lambda * running
            adv[i] = running
        batch.advantages = adv
        batch.returns = adv + batch.value_estimates

    def policy_loss_and_grads(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        old_log_probs: np.ndarray,
        advantages: np.ndarray,
    ) -> tuple[float, list[np.ndarray], float]:
        """Clipped-surrogate loss, its gradients, and a KL estimate."""
        cfg = self.cfg
        n = states.shape[0]
        logits, cache = self.policy.forward(states)
        log_probs = _log_softmax(logits)
        probs = np.exp(log_probs)
        idx = np.arange(n)
        logp = log_probs[idx, actions]
        ratio = np.exp(logp - old_log_probs)
        unclipped = ratio * advantages
        clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * advantages
        surrogate = np.minimum(unclipped, clipped)
        loss = -float(surrogate.mean())

        # gradient flows through the ratio only where the unclipped branch is active
        active = unclipped <= clipped
        dlogp = np.where(active, -advantages * ratio, 0.0) / n
        dlogits = -probs * dlogp[:, None]
        dlogits[idx, actions] += dlogp

        if cfg.entropy_coef != 0.0:
            entropy = -(probs * log_probs).sum(axis=1)
            loss -= cfg.entropy_coef * float(entropy.mean())
            # d(-coef*mean(H))/dlogits = coef/n * (-dH/dlogits), dH/dlogits = -p*(logp + H)
            dlogits += cfg.entropy_coef / n * (-probs * (log_probs + entropy[:, None]))

        grads = self.policy.backward(cache, dlogits)
        kl = float(np.mean(old_log_probs - logp))
        return loss, grads, kl

    def value_loss_and_grads(
        self, states: np.ndarray, returns: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        """Mean squared error of the value head against the returns."""
        n = states.shape[0]
        out, cache = self.value.forward(states)
        err = out[:, 0] - returns
        loss = float((err**2).mean())
        dout = (2.0 * err / n)[:, None]
        return loss, self.value.backward(cache, dout)

    def update(self, batch: TransitionBatch) -> dict:
        """Run clipped-surrogate and value regression epochs on one batch."""
        if batch.advantages is None or batch.returns is None:
            self.compute_gae(batch)
        stats = {"policy_loss": 0.0, "value_loss": 0.0, "kl": 0.0, "aborted": False}
        for _ in range(self.cfg.epochs_per_update):
            p_loss, p_grads, kl = self.policy_loss_and_grads(
                batch.states, batch.action_indices, batch.behavior_log_probs, batch.advantages
            )
            v_loss, v_grads = self.value_loss_and_grads(batch.states, batch.returns)
            finite = np.isfinite(p_loss) and np.isfinite(v_loss)
            finite = finite and all(np.isfinite(g).all() for g in p_grads + v_grads)
            if not finite:
                stats.update(aborted=True, policy_loss=float(p_loss), value_loss=float(v_loss))
                self.updates_aborted += 1
                return stats
            self._policy_opt.step(self.policy.params, p_grads)
            self._value_opt.step(self.value.params, v_grads)
            stats.update(policy_loss=p_loss, value_loss=v_loss, kl=kl)
        self.updates_done += 1
        return stats

    # ---- persistence -----------------------------------------------------

    def save(self, path: str) -> None:
        arrays = {}
        for tag, net in (("policy", self.policy), ("value", self.value)):
            for i, p in enumerate(net.params):
                arrays[f"{tag}_{i}"] = p
        np.savez(
            path,
            version=np.int64(CHECKPOINT_VERSION),
            state_dim=np.int64(self.cfg.state_dim),
            action_count=np.int64(self.cfg.action_count),
            **arrays,
        )

    def load(self, path: str) -> None:
        data = np.load(path)
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ConfigurationError(
                f"checkpoint version {int(data['version'])} unsupported "
                f"(expected {CHECKPOINT_VERSION})"
            )
        if int(data["state_dim"]) != self.cfg.state_dim or int(
            data["action_count"]
        ) != self.cfg.action_count:
            raise ConfigurationError("checkpoint dimensions do not match the agent config")
        for tag, net in (("policy", self.policy), ("value", self.value)):
            net.set_params([data[f"{tag}_{i}"] for i in range(2 * len(net.weights))])
