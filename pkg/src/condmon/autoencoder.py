"""Single-hidden-layer ReLU autoencoder trained with Adam.

Trained offline on smoothed vibration vectors; only the encoder half is
deployed, as a fixed compressed-feature extractor.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model_io

log = logging.getLogger(__name__)

DEFAULT_CODE_SIZE = 5
DECODER_ACTIVATIONS = ("relu", "linear")


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


@dataclass
class AeParams:
    """Full autoencoder parameters. W/b encode, W0/b0 decode."""

    W: np.ndarray  # (L, d)
    b: np.ndarray  # (L,)
    W0: np.ndarray  # (m, L)
    b0: np.ndarray  # (m,)
    decoder_activation: str = "relu"

    def __post_init__(self):
        L, d = self.W.shape
        m, L2 = self.W0.shape
        if L2 != L or self.b.shape != (L,) or self.b0.shape != (m,):
            raise ValueError("inconsistent parameter shapes")
        if self.decoder_activation not in DECODER_ACTIVATIONS:
            raise ValueError(f"decoder_activation must be one of {DECODER_ACTIVATIONS}")

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def L(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W0.shape[0]

    def copy(self) -> "AeParams":
        return AeParams(
            self.W.copy(), self.b.copy(), self.W0.copy(), self.b0.copy(),
            self.decoder_activation,
        )


@dataclass
class TrainConfig:
    """One-epoch minibatch Adam training. epochs stays 1 in the pipeline."""

    epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 1e-3
    init_seed: int = 0
    shuffle_seed: int = 0
    decoder_activation: str = "relu"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class AdamState:
    """Adam moment accumulators, one pair per parameter group."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: AeParams, learning_rate: float = 1e-3) -> "AdamState":
        state = cls(learning_rate=learning_rate)
        for name, arr in _param_groups(params).items():
            state.first_moment[name] = np.zeros_like(arr)
            state.second_moment[name] = np.zeros_like(arr)
        return state


def _param_groups(params: AeParams) -> dict[str, np.ndarray]:
    return {"W": params.W, "b": params.b, "W0": params.W0, "b0": params.b0}


def init_params(
    d: int, L: int, m: int, seed: int, decoder_activation: str = "relu"
) -> AeParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    if min(d, L, m) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    lim_enc = np.sqrt(6.0 / (d + L))
    lim_dec = np.sqrt(6.0 / (L + m))
    return AeParams(
        W=rng.uniform(-lim_enc, lim_enc, size=(L, d)),
        b=np.zeros(L),
        W0=rng.uniform(-lim_dec, lim_dec, size=(m, L)),
        b0=np.zeros(m),
        decoder_activation=decoder_activation,
    )


def encode(model, x: np.ndarray) -> np.ndarray:
    """ReLU(W x + b). Accepts a single vector or a matrix of row vectors.

    `model` is anything carrying W and b (AeParams or a deployed Encoder).
    """
    x = np.asarray(x, dtype=float)
    d = model.W.shape[1]
    if x.shape[-1] != d:
        raise ValueError(f"input length {x.shape[-1]} != encoder input size {d}")
    if x.ndim == 1:
        return _relu(model.W @ x + model.b)
    if x.ndim == 2:
        return _relu(x @ model.W.T + model.b)
    raise ValueError(f"expected vector or matrix, got shape {x.shape}")


def decode(params: AeParams, h: np.ndarray) -> np.ndarray:
    """Decoder map; ReLU output by default (clamps negative reconstructions)."""
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != params.L:
        raise ValueError(f"code length {h.shape[-1]} != {params.L}")
    if h.ndim == 1:
        z = params.W0 @ h + params.b0
    elif h.ndim == 2:
        z = h @ params.W0.T + params.b0
    else:
        raise ValueError(f"expected vector or matrix, got shape {h.shape}")
    return _relu(z) if params.decoder_activation == "relu" else z


def reconstruct(params: AeParams, x: np.ndarray) -> np.ndarray:
    return decode(params, encode(params, x))


def loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Mean squared reconstruction error, averaged over every element."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    diff = x_hat - x
    return float(np.mean(diff * diff))


def backprop_grads(params: AeParams, batch: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of the mean batch MSE. ReLU subgradient at 0 is 0."""
    X = np.atleast_2d(np.asarray(batch, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("empty batch")
    n = X.shape[0]

    Z1 = X @ params.W.T + params.b  # (n, L)
    H = _relu(Z1)
    Z2 = H @ params.W0.T + params.b0  # (n, m)
    X_hat = _relu(Z2) if params.decoder_activation == "relu" else Z2
    if not np.isfinite(X_hat).all():
        raise FloatingPointError("non-finite activations during backprop")

    dX_hat = 2.0 * (X_hat - X) / (n * params.m)
    dZ2 = dX_hat * (Z2 > 0.0) if params.decoder_activation == "relu" else dX_hat
    dW0 = dZ2.T @ H
    db0 = dZ2.sum(axis=0)
    dH = dZ2 @ params.W0
    dZ1 = dH * (Z1 > 0.0)
    dW = dZ1.T @ X
    db = dZ1.sum(axis=0)
    return {"W": dW, "b": db, "W0": dW0, "b0": db0}


def adam_step(params: AeParams, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Standard Adam update with bias correction, applied in place."""
    groups = _param_groups(params)
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for {name}")
        if g.shape != groups[name].shape:
            raise ValueError(f"gradient shape mismatch for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, g in grads.items():
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        groups[name] -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


def train(vectors: np.ndarray, code_size: int, config: TrainConfig) -> AeParams:
    """Minibatch Adam over the training vectors; one epoch by default.

    Every vector lands in exactly one minibatch per epoch (fixed shuffle per
    seed, trailing partial batch included).
    """
    X = np.atleast_2d(np.asarray(vectors, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("empty training stream")
    n, d = X.shape
    params = init_params(d, code_size, d, config.init_seed, config.decoder_activation)
    state = AdamState.for_params(params, learning_rate=config.learning_rate)
    shuffle_rng = np.random.default_rng(config.shuffle_seed)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = X[order[start : start + config.batch_size]]
            grads = backprop_grads(params, batch)
            adam_step(params, grads, state)
            if log.isEnabledFor(logging.DEBUG):
                log.debug(
                    "epoch %d batch %d loss %.6g",
                    epoch,
                    start // config.batch_size,
                    loss(batch, reconstruct(params, batch)),
                )
    return params


@dataclass(frozen=True)
class Encoder:
    """The deployed artifact: encoder weights only, no decode capability."""

    W: np.ndarray
    b: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def L(self) -> int:
        return self.W.shape[0]

    def encode(self, x: np.ndarray) -> np.ndarray:
        return encode(self, x)


def training_set_digest(matrices) -> str:
    """sha256 over the training arrays, recorded as encoder provenance."""
    h = hashlib.sha256()
    for arr in matrices:
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return h.hexdigest()


def save_encoder(model, path: Path, provenance: dict | None = None) -> None:
    """Persists W and b only; the decoder never ships."""
    meta = {
        "d": int(model.W.shape[1]),
        "L": int(model.W.shape[0]),
        "provenance": provenance or getattr(model, "provenance", {}) or {},
    }
    model_io.save_blob(path, "encoder", meta, {"W": model.W, "b": model.b})


def load_encoder(path: Path) -> Encoder:
    _, meta, arrays = model_io.load_blob(path, expected_kind="encoder")
    W, b = arrays.get("W"), arrays.get("b")
    if W is None or b is None or W.ndim != 2 or b.shape != (W.shape[0],):
        raise model_io.ModelFormatError(f"{path}: malformed encoder arrays")
    if (meta.get("d"), meta.get("L")) != (W.shape[1], W.shape[0]):
        raise model_io.ModelFormatError(f"{path}: header dims disagree with arrays")
    return Encoder(W=W, b=b, provenance=meta.get("provenance", {}))
