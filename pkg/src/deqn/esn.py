"""Stacked echo state network with a single trainable linear readout.

Each reservoir layer applies a leaky-integrator update::

    h[k] = (1 - beta) * h[k-1] + beta * tanh(W_in @ x[k] + W_rec @ h[k-1])

Layer 1 is driven by the raw input, layer ``l > 1`` by layer ``l-1``'s new
state. The readout sees ``concat(x, h_1, ..., h_L)``. Reservoir weights are
read-only arrays; only ``W_out`` ever changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ReservoirLayer:
    W_in: np.ndarray
    W_rec: np.ndarray
    leak_beta: float

    def __post_init__(self):
        self.W_in.setflags(write=False)
        self.W_rec.setflags(write=False)

    @property
    def neurons(self) -> int:
        return self.W_rec.shape[0]


@dataclass
class DeqnNetwork:
    layers: list[ReservoirLayer]
    W_out: np.ndarray
    input_dim: int
    neurons: int
    seed: int = 0
    spectral_radius: float = 0.9
    sparsity: float = 0.2
    input_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def output_dim(self) -> int:
        return self.W_out.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.input_dim + self.num_layers * self.neurons

    def zero_state(self) -> np.ndarray:
        return np.zeros((self.num_layers, self.neurons))

    def features(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        return np.concatenate((x, h.ravel()))


def spectral_radius(W: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(W))))


def _draw_recurrent(rng, n, sparsity, target_radius, max_tries=20):
    for _ in range(max_tries):
        W = rng.uniform(-1.0, 1.0, size=(n, n)) * (rng.random((n, n)) < sparsity)
        rho = spectral_radius(W)
        if rho > 1e-8:
            return W * (target_radius / rho)
    raise RuntimeError(f"could not draw a recurrent matrix with nonzero spectral radius in {max_tries} tries")


def init_network(
    num_layers: int,
    neurons: int,
    input_dim: int,
    output_dim: int,
    spectral_radius: float = 0.9,
    seed: int = 0,
    leak_beta: float = 0.7,
    sparsity: float = 0.2,
    input_scale: float = 1.0,
) -> DeqnNetwork:
    if not 0 < spectral_radius < 1:
        raise ValueError("spectral_radius must lie in (0, 1)")
    if not 0 <= leak_beta <= 1:
        raise ValueError("leak_beta must lie in [0, 1]")
    rng = np.random.default_rng([seed, 0xE5])
    layers = []
    fan_in = input_dim
    for _ in range(num_layers):
        W_in = rng.uniform(-input_scale, input_scale, size=(neurons, fan_in))
        W_rec = _draw_recurrent(rng, neurons, sparsity, spectral_radius)
        layers.append(ReservoirLayer(W_in, W_rec, leak_beta))
        fan_in = neurons
    W_out = np.zeros((output_dim, input_dim + num_layers * neurons))
    return DeqnNetwork(layers, W_out, input_dim, neurons, seed, spectral_radius, sparsity, input_scale)


def advance(net: DeqnNetwork, prev: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Next hidden state, shape ``(L, neurons)``; ``prev`` is left untouched."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.input_dim},)")
    if prev.shape != (net.num_layers, net.neurons):
        raise ValueError(f"hidden state has shape {prev.shape}")
    h = np.empty_like(prev)
    drive = x
    for l, layer in enumerate(net.layers):
        b = layer.leak_beta
        h[l] = (1.0 - b) * prev[l] + b * np.tanh(layer.W_in @ drive + layer.W_rec @ prev[l])
        drive = h[l]
    return h


def readout(net: DeqnNetwork, x: np.ndarray, h: np.ndarray, W_out: np.ndarray | None = None) -> np.ndarray:
    W = net.W_out if W_out is None else W_out
    u = net.features(np.asarray(x, dtype=float), h)
    if u.shape[0] != W.shape[1]:
        raise ValueError(f"feature length {u.shape[0]} does not match readout width {W.shape[1]}")
    return W @ u


def readout_loss(W_out, features, actions, targets) -> float:
    q = np.einsum("bd,bd->b", features, W_out[actions])
    # overflow surfaces as a non-finite loss, which the caller turns into DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean((targets - q) ** 2))


def readout_gradient(W_out, features, actions, targets) -> np.ndarray:
    """Gradient of the mean squared TD error w.r.t. ``W_out``; only selected rows are nonzero."""
    B = features.shape[0]
    err = targets - np.einsum("bd,bd->b", features, W_out[actions])
    sel = np.zeros((B, W_out.shape[0]))
    sel[np.arange(B), actions] = err
    return (-2.0 / B) * (sel.T @ features)


def train_readout_step(W_out, features, actions, targets, learning_rate):
    """One plain SGD step; returns ``(new_W_out, loss_before_step)``.

    Samples with a non-finite target are dropped.
    """
    features = np.asarray(features, dtype=float)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=float)
    ok = np.isfinite(targets)
    if not ok.all():
        features, actions, targets = features[ok], actions[ok], targets[ok]
    if targets.size == 0:
        return W_out.copy(), float("nan")
    loss = readout_loss(W_out, features, actions, targets)
    return W_out - learning_rate * readout_gradient(W_out, features, actions, targets), loss


def save_network(net: DeqnNetwork, path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "num_layers": net.num_layers,
        "neurons": net.neurons,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "leak_beta": [layer.leak_beta for layer in net.layers],
        "seed": net.seed,
        "spectral_radius": net.spectral_radius,
        "sparsity": net.sparsity,
        "input_scale": net.input_scale,
    }
    arrays = {"W_out": net.W_out}
    for l, layer in enumerate(net.layers):
        arrays[f"W_in_{l}"] = layer.W_in
        arrays[f"W_rec_{l}"] = layer.W_rec
    with Path(path).open("wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_network(path) -> DeqnNetwork:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        layers = [
            ReservoirLayer(data[f"W_in_{l}"].copy(), data[f"W_rec_{l}"].copy(), meta["leak_beta"][l])
            for l in range(meta["num_layers"])
        ]
        W_out = data["W_out"].copy()
    return DeqnNetwork(
        layers,
        W_out,
        meta["input_dim"],
        meta["neurons"],
        meta["seed"],
        meta["spectral_radius"],
        meta["sparsity"],
        meta["input_scale"],
    )
