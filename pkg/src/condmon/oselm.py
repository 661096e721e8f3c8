"""One-class online-sequential extreme learning machine.

A random fixed hidden layer feeds a single output node trained toward 1 on
healthy samples. Output weights start from a ridge solve over the first 10
samples and are then updated per sample by recursive least squares on the
information matrix M = I/C + H'H; training ends once the relative weight
change stays below 0.1% for 10 consecutive samples.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model_io

INIT_BATCH_SIZE = 10
DEFAULT_HIDDEN = 10
DEFAULT_C = 100.0
TC_PERCENT = 0.1
CONVERGENCE_WINDOW = 10


class PhaseError(RuntimeError):
    """An operation was attempted in the wrong lifecycle phase."""


class Phase(enum.Enum):
    COLLECTING = "collecting_init_batch"
    TRAINING = "online_training"
    INFERENCE = "inference"


@dataclass
class ConvergenceMonitor:
    """Counts consecutive sub-threshold weight changes; fires once."""

    tc_percent: float = TC_PERCENT
    window: int = CONVERGENCE_WINDOW
    consecutive: int = 0
    converged_at: int | None = None

    def observe(self, delta_percent: float, sample_index: int) -> bool:
        """Returns True on the observation that completes the window."""
        if self.converged_at is not None:
            return False
        if delta_percent < self.tc_percent:
            self.consecutive += 1
        else:
            self.consecutive = 0
        if self.consecutive >= self.window:
            self.converged_at = sample_index
            return True
        return False


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


class OnlineElm:
    """Single-output OSELM in boundary (one-class) mode.

    The random projection (Wstar, bstar) is drawn once and never updated.
    Lifecycle: COLLECTING -> init_batch -> TRAINING -> (convergence) ->
    INFERENCE; transitions are forward-only.
    """

    def __init__(
        self,
        n_in: int,
        n_hidden: int = DEFAULT_HIDDEN,
        C: float = DEFAULT_C,
        seed: int = 0,
        tc_percent: float = TC_PERCENT,
        window: int = CONVERGENCE_WINDOW,
    ):
        if n_in < 1 or n_hidden < 1:
            raise ValueError("n_in and n_hidden must be positive")
        if C <= 0:
            raise ValueError("regularization hyperparameter C must be positive")
        rng = np.random.default_rng(seed)
        self.Wstar = rng.uniform(-1.0, 1.0, size=(n_hidden, n_in))
        self.bstar = rng.uniform(0.0, 1.0, size=n_hidden)
        self.C = float(C)
        self.seed = seed
        self.beta: np.ndarray | None = None
        self.M: np.ndarray | None = None  # information matrix I/C + H'H
        self._P: np.ndarray | None = None  # inverse of M, rank-one maintained
        self.phase = Phase.COLLECTING
        self.samples_seen = 0
        self.monitor = ConvergenceMonitor(tc_percent=tc_percent, window=window)

    @property
    def n_in(self) -> int:
        return self.Wstar.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.Wstar.shape[0]

    def hidden(self, x: np.ndarray) -> np.ndarray:
        """Sigmoid hidden-layer row for one input vector (components in (0,1))."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_in,):
            raise ValueError(f"expected input shape ({self.n_in},), got {x.shape}")
        if not np.isfinite(x).all():
            raise ValueError("non-finite input")
        return _sigmoid(self.Wstar @ x + self.bstar)

    def hidden_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _sigmoid(X @ self.Wstar.T + self.bstar)

    def init_batch(self, samples: np.ndarray, targets=None) -> None:
        """Ridge solve over the first INIT_BATCH_SIZE samples; enters TRAINING."""
        if self.phase is not Phase.COLLECTING:
            raise PhaseError(f"init_batch not allowed in phase {self.phase.value}")
        X = np.atleast_2d(np.asarray(samples, dtype=float))
        if X.shape != (INIT_BATCH_SIZE, self.n_in):
            raise ValueError(
                f"init batch must be {INIT_BATCH_SIZE}x{self.n_in}, got {X.shape}"
            )
        y = np.ones(INIT_BATCH_SIZE) if targets is None else np.asarray(targets, float)
        if y.shape != (INIT_BATCH_SIZE,):
            raise ValueError("targets must match the init batch")
        H0 = self.hidden_matrix(X)
        M0 = np.eye(self.n_hidden) / self.C + H0.T @ H0
        self.beta = np.linalg.solve(M0, H0.T @ y)
        self.M = M0
        P = np.linalg.inv(M0)
        self._P = (P + P.T) / 2.0
        self.samples_seen = INIT_BATCH_SIZE
        self.phase = Phase.TRAINING

    def sequential_update(self, x: np.ndarray, target: float = 1.0) -> float:
        """One RLS step; returns the relative weight change in percent.

        M_n = M_{n-1} + h'h and beta_n = beta_{n-1} + M_n^{-1} h' (y - h beta),
        with M_n^{-1} maintained by a Sherman-Morrison rank-one update.
        """
        if self.phase is not Phase.TRAINING:
            raise PhaseError(f"sequential_update not allowed in phase {self.phase.value}")
        h = self.hidden(x)
        Ph = self._P @ h
        self._P -= np.outer(Ph, Ph) / (1.0 + float(h @ Ph))
        self._P = (self._P + self._P.T) / 2.0
        self.M += np.outer(h, h)

        beta_prev = self.beta
        innovation = float(target) - float(h @ beta_prev)
        beta_next = beta_prev + self._P @ h * innovation
        prev_norm = float(np.linalg.norm(beta_prev))
        if prev_norm == 0.0:
            delta_percent = math.inf
        else:
            delta_percent = 100.0 * float(np.linalg.norm(beta_next - beta_prev)) / prev_norm
        self.beta = beta_next
        self.samples_seen += 1
        return delta_percent

    def observe(self, delta_percent: float) -> bool:
        """Feeds one weight-change reading to the monitor; enters INFERENCE on fire."""
        if self.phase is not Phase.TRAINING:
            raise PhaseError(f"observe not allowed in phase {self.phase.value}")
        fired = self.monitor.observe(delta_percent, self.samples_seen)
        if fired:
            self.phase = Phase.INFERENCE
        return fired

    def predict(self, x: np.ndarray) -> tuple[float, float]:
        """(output y, deviation |1 - y|)."""
        if self.beta is None:
            raise PhaseError("predict requires an initialized model")
        y = float(self.hidden(x) @ self.beta)
        return y, abs(1.0 - y)

    # -- persistence ---------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {"Wstar": self.Wstar, "bstar": self.bstar}
        if self.beta is not None:
            arrays.update(beta=self.beta, M=self.M, P=self._P)
        return arrays

    def state_meta(self) -> dict:
        return {
            "C": self.C,
            "seed": self.seed,
            "phase": self.phase.value,
            "samples_seen": self.samples_seen,
            "monitor": {
                "tc_percent": self.monitor.tc_percent,
                "window": self.monitor.window,
                "consecutive": self.monitor.consecutive,
                "converged_at": self.monitor.converged_at,
            },
        }

    def save(self, path: Path) -> None:
        model_io.save_blob(path, "oselm", self.state_meta(), self.state_arrays())

    @classmethod
    def from_state(cls, meta: dict, arrays: dict[str, np.ndarray]) -> "OnlineElm":
        Wstar = arrays["Wstar"]
        model = cls.__new__(cls)
        model.Wstar = Wstar
        model.bstar = arrays["bstar"]
        model.C = float(meta["C"])
        model.seed = meta.get("seed")
        model.beta = arrays.get("beta")
        model.M = arrays.get("M")
        model._P = arrays.get("P")
        model.phase = Phase(meta["phase"])
        model.samples_seen = int(meta["samples_seen"])
        mon = meta["monitor"]
        model.monitor = ConvergenceMonitor(
            tc_percent=mon["tc_percent"],
            window=mon["window"],
            consecutive=mon["consecutive"],
            converged_at=mon["converged_at"],
        )
        if model.phase is not Phase.COLLECTING and model.beta is None:
            raise model_io.ModelFormatError("trained state is missing beta/M arrays")
        return model

    @classmethod
    def load(cls, path: Path) -> "OnlineElm":
        _, meta, arrays = model_io.load_blob(path, expected_kind="oselm")
        return cls.from_state(meta, arrays)
