"""Actor/critic networks over the flattened observation.

The networks are plain dense ReLU stacks in float64 numpy with hand-written
backward passes, so gradients are exact, checkpoints are bit-reproducible,
and training is deterministic for a fixed seed.  The actor ends in a linear
layer over the action set; the critic has a single hidden layer and a scalar
output.

Observation layout (fixed, version 1): time features scaled to [0,1],
then per-generator P/Q/V blocks, per-load P/Q/V blocks, per-line
P_or/P_ex/Q_or/Q_ex/V_or/V_ex/a_or/a_ex blocks, line status, rho, the
topology vector, and the overflow/cooldown/maintenance timers divided by a
fixed one-day horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import Observation
from .scenario import load_checkpoint, save_checkpoint

FEATURE_VERSION = 1
TIMER_HORIZON = 288.0  # one day of 5-minute steps

ACTOR_HIDDEN_DEFAULT = (1000, 1000, 1000)
CRITIC_HIDDEN_DEFAULT = (64,)


def featurize(obs: Observation) -> np.ndarray:
    """Flatten an Observation into the fixed-order state vector."""
    time_block = np.array([obs.month / 12.0, obs.day / 31.0, obs.hour / 24.0,
                           obs.minute / 60.0, obs.day_of_week / 7.0])
    parts = [
        time_block,
        obs.p_gen, obs.q_gen, obs.v_gen,
        obs.p_load, obs.q_load, obs.v_load,
        obs.p_or, obs.p_ex, obs.q_or, obs.q_ex,
        obs.v_or, obs.v_ex, obs.a_or, obs.a_ex,
        obs.line_connected.astype(np.float64),
        obs.rho,
        obs.topo_vect.astype(np.float64),
        obs.t_overflow / TIMER_HORIZON,
        obs.t_line_cooldown / TIMER_HORIZON,
        obs.t_sub_cooldown / TIMER_HORIZON,
        obs.t_next_maintenance / TIMER_HORIZON,
        obs.t_maintenance_duration / TIMER_HORIZON,
    ]
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def feature_size(n_lines: int, n_generators: int, n_loads: int,
                 n_substations: int) -> int:
    """Length of the state vector for a grid of the given shape."""
    return 5 + 4 * n_generators + 4 * n_loads + 16 * n_lines + n_substations


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # deterministic sign convention
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


class MLP:
    """Dense ReLU stack with a linear output layer and explicit backprop."""

    def __init__(self, sizes: list[int], rng: np.random.Generator,
                 final_gain: float = 0.01):
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for k in range(len(sizes) - 1):
            gain = final_gain if k == len(sizes) - 2 else np.sqrt(2.0)
            self.weights.append(_orthogonal(rng, sizes[k], sizes[k + 1], gain))
            self.biases.append(np.zeros(sizes[k + 1]))
        self._cache: list[np.ndarray] | None = None

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray, keep_cache: bool = False) -> np.ndarray:
        """x: (batch, in) or (in,); ReLU between layers, linear at the end."""
        single = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = [h]
        for k in range(self.n_layers):
            z = h @ self.weights[k] + self.biases[k]
            h = np.maximum(z, 0.0) if k < self.n_layers - 1 else z
            cache.append(h)
        self._cache = cache if keep_cache else None
        return h[0] if single else h

    def backward(self, grad_out: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of a scalar loss wrt weights/biases, given dL/d(output).

        Requires the preceding forward(..., keep_cache=True).
        """
        if self._cache is None:
            raise RuntimeError("forward(keep_cache=True) must precede backward()")
        cache = self._cache
        grad = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        d_w = [np.empty(0)] * self.n_layers
        d_b = [np.empty(0)] * self.n_layers
        for k in range(self.n_layers - 1, -1, -1):
            h_in, h_out = cache[k], cache[k + 1]
            if k < self.n_layers - 1:
                grad = grad * (h_out > 0.0)
            d_w[k] = h_in.T @ grad
            d_b[k] = grad.sum(axis=0)
            if k > 0:
                grad = grad @ self.weights[k].T
        return d_w, d_b

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> "MLP":
        dup = object.__new__(MLP)
        dup.sizes = list(self.sizes)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        dup._cache = None
        return dup


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


@dataclass
class PolicyParams:
    """Actor and critic weights plus the shape metadata needed to rebuild them."""

    actor: MLP
    critic: MLP
    input_dim: int
    n_actions: int

    @classmethod
    def initialize(cls, input_dim: int, n_actions: int, rng: np.random.Generator,
                   actor_hidden: tuple[int, ...] = ACTOR_HIDDEN_DEFAULT,
                   critic_hidden: tuple[int, ...] = CRITIC_HIDDEN_DEFAULT) -> "PolicyParams":
        actor = MLP([input_dim, *actor_hidden, n_actions], rng)
        critic = MLP([input_dim, *critic_hidden, 1], rng, final_gain=1.0)
        return cls(actor, critic, input_dim, n_actions)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.actor.copy(), self.critic.copy(),
                            self.input_dim, self.n_actions)

    def logits(self, state: np.ndarray) -> np.ndarray:
        return self.actor.forward(state)

    def value(self, state: np.ndarray) -> float | np.ndarray:
        out = self.critic.forward(state)
        return float(out[0]) if out.ndim == 1 else out[:, 0]

    def act(self, state: np.ndarray, mode: str = "sample",
            rng: np.random.Generator | None = None) -> tuple[int, float, float]:
        """Pick an action index; returns (index, log-prob, value estimate).

        greedy: argmax of the logits.  sample: perturb the logits with
        standard Gumbel noise and take the argmax, which draws exactly from
        the softmax distribution.
        """
        logits = self.logits(state)
        if not np.all(np.isfinite(logits)):
            raise ValueError("non-finite actor logits")
        if mode == "greedy":
            idx = int(np.argmax(logits))
        elif mode == "sample":
            if rng is None:
                raise ValueError("sample mode needs an rng")
            idx = int(np.argmax(logits + gumbel_noise(rng, logits.shape)))
        else:
            raise ValueError(f"unknown mode {mode!r}")
        logp = float(log_softmax(logits)[idx])
        return idx, logp, float(self.value(state))

    def top_k(self, state: np.ndarray, k: int, sample: bool = False,
              rng: np.random.Generator | None = None) -> list[int]:
        """Indices of the k most preferred actions (Gumbel-perturbed if sampling)."""
        logits = self.logits(state)
        if not np.all(np.isfinite(logits)):
            raise ValueError("non-finite actor logits")
        if sample:
            if rng is None:
                raise ValueError("sample mode needs an rng")
            logits = logits + gumbel_noise(rng, logits.shape)
        order = np.argsort(-logits, kind="stable")
        return [int(i) for i in order[:k]]


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(np.clip(u, 1e-300, 1.0)))


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_policy(params: PolicyParams, path, extra_config: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    for net_name, net in (("actor", params.actor), ("critic", params.critic)):
        for k in range(net.n_layers):
            arrays[f"{net_name}.w{k}"] = net.weights[k]
            arrays[f"{net_name}.b{k}"] = net.biases[k]
    config = {
        "feature_version": FEATURE_VERSION,
        "input_dim": params.input_dim,
        "n_actions": params.n_actions,
        "actor_sizes": params.actor.sizes,
        "critic_sizes": params.critic.sizes,
    }
    if extra_config:
        config["extra"] = extra_config
    save_checkpoint(path, config, arrays)


def load_policy(path) -> tuple[PolicyParams, dict]:
    config, arrays = load_checkpoint(path)
    if config.get("feature_version") != FEATURE_VERSION:
        raise ValueError(f"{path}: unsupported feature version "
                         f"{config.get('feature_version')!r}")

    def rebuild(name: str, sizes: list[int]) -> MLP:
        net = object.__new__(MLP)
        net.sizes = list(sizes)
        net.weights = []
        net.biases = []
        for k in range(len(sizes) - 1):
            net.weights.append(arrays[f"{name}.w{k}"].astype(np.float64))
            net.biases.append(arrays[f"{name}.b{k}"].astype(np.float64))
        net._cache = None
        return net

    params = PolicyParams(rebuild("actor", config["actor_sizes"]),
                          rebuild("critic", config["critic_sizes"]),
                          int(config["input_dim"]), int(config["n_actions"]))
    return params, config
