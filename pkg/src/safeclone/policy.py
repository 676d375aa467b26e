"""Behavior-cloning policy: a small tanh MLP trained by hand-rolled backprop.

The output head is bound * tanh(.), so no trained policy can emit an action
outside the actuator limits. Gradients are derived manually and checked
against central finite differences in the test suite.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError, TrainingDivergedError
from .observations import ObsSchema, make_obs_map
from .seeding import substream


@dataclass
class MlpPolicy:
    weights: list  # W_l of shape (fan_in, fan_out)
    biases: list  # b_l of shape (fan_out,)
    action_bound: np.ndarray  # (n_u,)
    obs_schema: ObsSchema
    train_seed: int = 0

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.weights[0].shape[0]:
            raise ContractError(
                f"observation has {obs.shape[-1]} entries, policy expects "
                f"{self.weights[0].shape[0]}")
        a = obs
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ w + b)
        z = a @ self.weights[-1] + self.biases[-1]
        return self.action_bound * np.tanh(z)

    def __call__(self, obs) -> np.ndarray:
        return self.forward(obs)


def init_policy(layer_sizes, action_bound, obs_schema: ObsSchema,
                rng, train_seed: int = 0) -> MlpPolicy:
    """Glorot-initialized policy with the given layer sizes."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpPolicy(weights=weights, biases=biases,
                     action_bound=np.atleast_1d(np.asarray(action_bound, float)),
                     obs_schema=obs_schema, train_seed=train_seed)


def loss_and_grads(policy: MlpPolicy, X, Y):
    """Mean-squared-error loss and its analytic parameter gradients.

    Backprop through y = bound * tanh(z_L), hidden tanh layers, and the
    affine maps; loss averages over both batch and action components.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    acts = [X]
    a = X
    for w, b in zip(policy.weights[:-1], policy.biases[:-1]):
        a = np.tanh(a @ w + b)
        acts.append(a)
    t_out = np.tanh(a @ policy.weights[-1] + policy.biases[-1])
    y = policy.action_bound * t_out
    err = y - Y
    loss = float(np.mean(err * err))

    batch, n_u = Y.shape
    dy = 2.0 * err / (batch * n_u)
    delta = dy * policy.action_bound * (1.0 - t_out * t_out)
    grads_w = [None] * len(policy.weights)
    grads_b = [None] * len(policy.biases)
    for layer in range(len(policy.weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ policy.weights[layer].T) * (1.0 - acts[layer] ** 2)
    return loss, grads_w, grads_b


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    validation_fraction: float = 0.1
    hidden: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ContractError("validation_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ContractError("batch_size and epochs must be >= 1")

    def to_json(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "learning_rate": self.learning_rate, "beta1": self.beta1,
                "beta2": self.beta2, "adam_eps": self.adam_eps,
                "validation_fraction": self.validation_fraction,
                "hidden": list(self.hidden), "seed": self.seed}

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        if "hidden" in doc:
            doc["hidden"] = tuple(doc["hidden"])
        return cls(**doc)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    action_variance: float = 0.0
    num_train: int = 0
    num_val: int = 0


def train_arrays(X, Y, action_bound, obs_schema: ObsSchema,
                 config: TrainConfig) -> tuple[MlpPolicy, TrainReport]:
    """Adam on MSE over (X, Y) with manual backprop; deterministic given seed."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if len(X) == 0:
        raise ContractError("training set is empty")
    n = len(X)
    split_rng = substream(config.seed, "split")
    perm = split_rng.permutation(n)
    n_val = max(1, int(round(config.validation_fraction * n))) if n > 1 else 0
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if len(train_idx) == 0:
        train_idx = perm
    Xt, Yt = X[train_idx], Y[train_idx]
    Xv, Yv = X[val_idx], Y[val_idx]

    policy = init_policy([X.shape[1], *config.hidden, Y.shape[1]], action_bound,
                         obs_schema, substream(config.seed, "init"),
                         train_seed=config.seed)
    m_w = [np.zeros_like(w) for w in policy.weights]
    v_w = [np.zeros_like(w) for w in policy.weights]
    m_b = [np.zeros_like(b) for b in policy.biases]
    v_b = [np.zeros_like(b) for b in policy.biases]

    report = TrainReport(action_variance=float(np.var(Y)),
                         num_train=len(train_idx), num_val=len(val_idx))
    shuffle_rng = substream(config.seed, "shuffle")
    step = 0
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(Xt))
        epoch_loss = 0.0
        seen = 0
        for start in range(0, len(Xt), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, gw, gb = loss_and_grads(policy, Xt[idx], Yt[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            step += 1
            bc1 = 1.0 - config.beta1**step
            bc2 = 1.0 - config.beta2**step
            for layer in range(len(policy.weights)):
                m_w[layer] = config.beta1 * m_w[layer] + (1 - config.beta1) * gw[layer]
                v_w[layer] = config.beta2 * v_w[layer] + (1 - config.beta2) * gw[layer] ** 2
                m_b[layer] = config.beta1 * m_b[layer] + (1 - config.beta1) * gb[layer]
                v_b[layer] = config.beta2 * v_b[layer] + (1 - config.beta2) * gb[layer] ** 2
                policy.weights[layer] -= config.learning_rate * (
                    m_w[layer] / bc1) / (np.sqrt(v_w[layer] / bc2) + config.adam_eps)
                policy.biases[layer] -= config.learning_rate * (
                    m_b[layer] / bc1) / (np.sqrt(v_b[layer] / bc2) + config.adam_eps)
            epoch_loss += loss * len(idx)
            seen += len(idx)
        report.train_loss.append(epoch_loss / seen)
        if len(Xv):
            val_err = policy.forward(Xv) - Yv
            report.val_loss.append(float(np.mean(val_err * val_err)))
    return policy, report


def train(dataset, obs_schema: ObsSchema, config: TrainConfig):
    """Fit a policy to a demonstration dataset under an observation schema."""
    obs_map = make_obs_map(obs_schema)
    xs, ys = [], []
    for demo in dataset.demos:
        if len(demo) == 0:
            continue
        xs.append(obs_map.batch(demo.states, demo.world))
        ys.append(demo.expert_actions)
    if not xs:
        raise ContractError("dataset contains no records")
    X = np.concatenate(xs)
    Y = np.concatenate(ys)
    bound = _bound_from_params(dataset.model_params)
    return train_arrays(X, Y, bound, obs_schema, config)


def _bound_from_params(model_params: dict) -> np.ndarray:
    if model_params.get("id") == "quad4d":
        t = float(model_params.get("tilt_max", 0.1745))
        return np.array([t, t])
    return np.array([float(model_params.get("omega_max", 1.0))])


MAGIC = "safeclone-policy-v1"


def save(policy: MlpPolicy) -> bytes:
    header = {
        "format": MAGIC,
        "layer_sizes": policy.layer_sizes,
        "action_bound": [float(b) for b in policy.action_bound],
        "obs_schema": policy.obs_schema.to_json(),
        "train_seed": policy.train_seed,
    }
    chunks = [json.dumps(header, sort_keys=True).encode("utf-8"), b"\n"]
    for w, b in zip(policy.weights, policy.biases):
        chunks.append(np.ascontiguousarray(w, dtype=np.float64).tobytes())
        chunks.append(np.ascontiguousarray(b, dtype=np.float64).tobytes())
    return b"".join(chunks)


def load(blob: bytes, expect_obs_dim: int | None = None) -> MlpPolicy:
    newline = blob.find(b"\n")
    if newline < 0:
        raise FormatError("policy payload has no header line")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unparseable policy header: {exc}") from exc
    if header.get("format") != MAGIC:
        raise FormatError("unrecognized policy format")
    sizes = header["layer_sizes"]
    if expect_obs_dim is not None and sizes[0] != expect_obs_dim:
        raise FormatError(
            f"policy expects observations of size {sizes[0]}, got {expect_obs_dim}")
    expected = sum((fi + 1) * fo for fi, fo in zip(sizes[:-1], sizes[1:])) * 8
    body = blob[newline + 1 :]
    if len(body) != expected:
        raise FormatError(f"policy body has {len(body)} bytes, expected {expected}")
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(body, dtype=np.float64, count=fan_in * fan_out,
                          offset=offset).reshape(fan_in, fan_out).copy()
        offset += fan_in * fan_out * 8
        b = np.frombuffer(body, dtype=np.float64, count=fan_out, offset=offset).copy()
        offset += fan_out * 8
        weights.append(w)
        biases.append(b)
    return MlpPolicy(weights=weights, biases=biases,
                     action_bound=np.asarray(header["action_bound"], dtype=float),
                     obs_schema=ObsSchema.from_json(header["obs_schema"]),
                     train_seed=int(header.get("train_seed", 0)))
