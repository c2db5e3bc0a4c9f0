"""Synthetic semantic latent spaces, semantic pilots and their statistics.

Real latents of even dimension are folded into complex symbols by pairing
the first half with the second half. Transmitter pilots are whitened so that
``X @ X.conj().T == n * I``; receiver pilots are only centred.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, SingularityError

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class LatentModel:
    """Gaussian-mixture stand-in for a pair of pretrained encoders.

    A shared latent ``z`` of dimension ``true_dim`` is drawn around one of
    ``class_count`` means placed on a sphere of radius ``class_separation``.
    The transmitter sees ``A @ z + noise`` and the receiver ``B @ z + noise``.
    """

    true_dim: int
    d: int
    m: int
    class_count: int
    class_separation: float
    tx_mix: np.ndarray
    rx_mix: np.ndarray
    class_means: np.ndarray
    noise_std: float = 0.1

    def __post_init__(self):
        if self.d % 2 or self.m % 2:
            raise ConfigError(f"latent dimensions must be even, got d={self.d}, m={self.m}")
        if self.class_count < 1:
            raise ConfigError("class_count must be >= 1")
        if self.tx_mix.shape != (self.d, self.true_dim):
            raise ConfigError("tx_mix must have shape (d, true_dim)")
        if self.rx_mix.shape != (self.m, self.true_dim):
            raise ConfigError("rx_mix must have shape (m, true_dim)")

    @classmethod
    def random(cls, seed, true_dim: int, d: int, m: int, class_count: int = 10,
               class_separation: float = 3.0, noise_std: float = 0.1) -> "LatentModel":
        rng = np.random.default_rng(seed)
        tx_mix = rng.standard_normal((d, true_dim)) / np.sqrt(true_dim)
        rx_mix = rng.standard_normal((m, true_dim)) / np.sqrt(true_dim)
        means = rng.standard_normal((class_count, true_dim))
        means *= class_separation / np.linalg.norm(means, axis=1, keepdims=True)
        return cls(true_dim, d, m, class_count, class_separation, tx_mix, rx_mix,
                   means, noise_std)

    def sample(self, rng: np.random.Generator, n: int):
        """Return real tx latents (d, n), rx latents (m, n) and labels (n,)."""
        labels = rng.integers(0, self.class_count, size=n)
        z = self.class_means[labels].T + rng.standard_normal((self.true_dim, n))
        s_tx = self.tx_mix @ z + self.noise_std * rng.standard_normal((self.d, n))
        s_rx = self.rx_mix @ z + self.noise_std * rng.standard_normal((self.m, n))
        return s_tx, s_rx, labels


@dataclass
class SemanticPilots:
    X: np.ndarray
    Y: np.ndarray
    labels: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @cached_property
    def P(self) -> np.ndarray:
        return cross_covariance(self.X, self.Y)

    @cached_property
    def PhP(self) -> np.ndarray:
        return self.P.conj().T @ self.P

    @cached_property
    def sy(self) -> float:
        """Receiver pilot energy ``tr(Y Y^H)``."""
        return float(np.vdot(self.Y, self.Y).real)


@dataclass
class LatentSet:
    """Everything a link knows about its latent spaces.

    ``pilots`` are whitened and centred; ``tx_mean``/``rx_mean`` and
    ``whitener`` are what was applied, so held-out data can be mapped the same
    way. ``class_means_rx`` are real receiver-space class centroids used by the
    nearest-mean task proxy.
    """

    pilots: SemanticPilots
    whitener: np.ndarray
    tx_mean: np.ndarray
    rx_mean: np.ndarray
    class_means_rx: np.ndarray
    test_tx: np.ndarray
    test_rx: np.ndarray
    test_labels: np.ndarray

    def prepare_tx(self, s_tx: np.ndarray) -> np.ndarray:
        """Map raw real tx latents (d, N) to whitened complex symbols."""
        return self.whitener @ pair_real_to_complex(s_tx - self.tx_mean[:, None])


def pair_real_to_complex(s: np.ndarray) -> np.ndarray:
    """Fold the first half onto the real part and the second half onto the imaginary part.

    Works on vectors or on column-stacked matrices (pairing along axis 0).
    """
    s = np.asarray(s)
    d = s.shape[0]
    if d % 2:
        raise ValueError(f"cannot pair odd dimension {d}")
    h = d // 2
    return s[:h] + 1j * s[h:]


def unpair_complex_to_real(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    return np.concatenate([y.real, y.imag], axis=0)


def whiten(X_raw: np.ndarray, link: Optional[int] = None):
    """Return ``(W @ X_raw, W)`` with ``W`` the inverse square root of the sample Gram."""
    X_raw = np.asarray(X_raw)
    dim, n = X_raw.shape
    where = f" for link {link}" if link is not None else ""
    if n < dim:
        raise SingularityError(f"need at least {dim} pilots to whiten{where}, got {n}")
    gram = X_raw @ X_raw.conj().T / n
    gram = (gram + gram.conj().T) / 2
    w, V = np.linalg.eigh(gram)
    if w[0] <= 0 or w[-1] / w[0] > MAX_CONDITION:
        raise SingularityError(f"pilot Gram matrix is rank deficient{where}")
    W = (V / np.sqrt(w)) @ V.conj().T
    return W @ X_raw, W


def cross_covariance(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``P = Y X^H`` over the pilot columns."""
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"pilot counts differ: {X.shape[1]} vs {Y.shape[1]}")
    return Y @ X.conj().T


def truncate(P: np.ndarray, r: int):
    """Best rank-r factors ``(U, s, Q)`` with ``P ~= U @ diag(s) @ Q^H``."""
    if not 1 <= r <= min(P.shape):
        raise ValueError(f"rank {r} outside [1, {min(P.shape)}]")
    U, s, Vh = np.linalg.svd(P, full_matrices=False)
    return U[:, :r], s[:r], Vh[:r].conj().T


def synthesize_latents(model: LatentModel, n: int, seed, n_test: int = 0,
                       link: Optional[int] = None) -> LatentSet:
    """Draw pilots and a held-out test set from ``model``.

    Both sides are centred with the pilot means; the transmitter side is
    whitened after pairing.
    """
    if n < max(model.d, model.m):
        raise ConfigError(f"need n >= max(d, m) = {max(model.d, model.m)} pilots, got {n}")
    rng = np.random.default_rng(seed)
    s_tx, s_rx, labels = model.sample(rng, n)
    tx_mean = s_tx.mean(axis=1)
    rx_mean = s_rx.mean(axis=1)
    s_tx_c = s_tx - tx_mean[:, None]
    s_rx_c = s_rx - rx_mean[:, None]
    X, W = whiten(pair_real_to_complex(s_tx_c), link=link)
    Y = pair_real_to_complex(s_rx_c)
    centroids = np.zeros((model.class_count, model.m))
    for c in range(model.class_count):
        sel = labels == c
        if np.any(sel):
            centroids[c] = s_rx_c[:, sel].mean(axis=1)
    if n_test:
        t_tx, t_rx, t_labels = model.sample(rng, n_test)
    else:
        t_tx = np.zeros((model.d, 0))
        t_rx = np.zeros((model.m, 0))
        t_labels = np.zeros(0, dtype=int)
    return LatentSet(SemanticPilots(X, Y, labels), W, tx_mean, rx_mean, centroids,
                     t_tx, t_rx - rx_mean[:, None], t_labels)


def save_pilots(path, pilots: SemanticPilots) -> None:
    """Write pilots to ``.npz`` with complex arrays ``X``, ``Y`` and optional ``labels``."""
    arrays = {"X": pilots.X, "Y": pilots.Y}
    if pilots.labels is not None:
        arrays["labels"] = pilots.labels
    np.savez(Path(path), **arrays)


def load_pilots(path, whiten_tx: bool = True) -> SemanticPilots:
    """Load externally produced pilots; ``X`` is whitened unless told otherwise."""
    with np.load(Path(path)) as f:
        X = np.asarray(f["X"], dtype=complex)
        Y = np.asarray(f["Y"], dtype=complex)
        labels = np.asarray(f["labels"]) if "labels" in f.files else None
    if X.shape[1] != Y.shape[1]:
        raise ConfigError("X and Y must have the same number of pilot columns")
    if whiten_tx:
        X, _ = whiten(X)
    return SemanticPilots(X, Y, labels)
