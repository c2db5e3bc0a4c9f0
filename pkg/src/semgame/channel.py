"""Rician flat-fading MIMO channels with path loss, lifted over K channel uses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LinkConfig:
    """Dimensions and budget of one transmitter-receiver pair.

    ``d`` and ``m`` are the real latent dimensions at the transmitter and the
    receiver, ``n_t``/``n_r`` the antenna counts, ``k`` the number of channel
    uses and ``p_max`` the power budget per channel use (watts).
    """

    d: int
    m: int
    n_t: int
    n_r: int
    k: int
    p_max: float = 1.0

    @property
    def modes(self) -> int:
        return self.k * self.n_t

    @property
    def budget(self) -> float:
        return self.k * self.p_max

    @property
    def xi(self) -> float:
        """Compression factor: complex symbols sent per block over the d/2 latent symbols."""
        return self.modes / (self.d // 2)


@dataclass(frozen=True)
class Topology:
    tx_positions: np.ndarray
    rx_positions: np.ndarray
    path_loss_exponent: float = 2.5
    rice_factor: float = 1.5
    reference_distance: float = 1.0
    noise_power: float = 1e-3

    def __post_init__(self):
        tx = np.asarray(self.tx_positions, dtype=float).reshape(-1, 2)
        rx = np.asarray(self.rx_positions, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)
        if tx.shape != rx.shape:
            raise ConfigError(
                f"topology has {len(tx)} transmitters but {len(rx)} receivers")
        if self.path_loss_exponent < 0 or self.rice_factor < 0:
            raise ConfigError("path loss exponent and rice factor must be >= 0")
        if self.noise_power <= 0:
            raise ConfigError("noise power must be > 0")
        if self.reference_distance <= 0:
            raise ConfigError("reference distance must be > 0")
        if np.any(self.distances() <= 0):
            raise ConfigError("every transmitter-receiver distance must be > 0")
        if len(tx) > 1:
            dtt = self.tx_distances()
            if np.any(dtt[~np.eye(len(tx), dtype=bool)] <= 0):
                raise ConfigError("transmitters must not be co-located")

    @property
    def num_links(self) -> int:
        return len(self.tx_positions)

    def distances(self) -> np.ndarray:
        """Matrix ``D[j, l]`` = distance from transmitter j to receiver l."""
        diff = self.tx_positions[:, None, :] - self.rx_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def tx_distances(self) -> np.ndarray:
        diff = self.tx_positions[:, None, :] - self.tx_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def alpha(self) -> dict[tuple[int, int], float]:
        """MUI scaling factor d(T_i, T_j) / d(T_i, R_i) for every ordered pair."""
        dtt = self.tx_distances()
        direct = np.diag(self.distances())
        L = self.num_links
        return {(i, j): float(dtt[i, j] / direct[i])
                for i in range(L) for j in range(L) if i != j}

    @classmethod
    def linear_array(cls, num_links: int, tx_rx_distance: float,
                     tx_spacing: float, **kwargs) -> "Topology":
        """Transmitters on a line, each receiver broadside at ``tx_rx_distance``.

        Adjacent links then have MUI scaling factor ``tx_spacing / tx_rx_distance``.
        """
        xs = np.arange(num_links) * float(tx_spacing)
        tx = np.stack([xs, np.zeros(num_links)], axis=1)
        rx = np.stack([xs, np.full(num_links, float(tx_rx_distance))], axis=1)
        return cls(tx, rx, **kwargs)


@dataclass(frozen=True)
class ChannelSet:
    """Lifted direct and cross channels of a scenario.

    ``direct[l]`` has shape (K*N_R_l, K*N_T_l); ``cross[(j, l)]`` maps
    transmitter j onto receiver l and has shape (K*N_R_l, K*N_T_j).
    """

    direct: dict[int, np.ndarray]
    cross: dict[tuple[int, int], np.ndarray]
    sigma2: float
    alpha: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def num_links(self) -> int:
        return len(self.direct)

    def interferers(self, l: int) -> list[int]:
        return [j for j in range(self.num_links) if j != l]


def path_loss_gain(distance: float, eta: float, ref_distance: float = 1.0) -> float:
    """Linear gain ``(d0 / max(d, d0)) ** eta``, never above one."""
    if distance <= 0 or ref_distance <= 0:
        raise ValueError("distance and reference distance must be positive")
    return (ref_distance / max(distance, ref_distance)) ** eta


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def rician_matrix(seed, n_r: int, n_t: int, kappa: float, gain: float = 1.0) -> np.ndarray:
    """Draw ``sqrt(gain) * (sqrt(k/(1+k)) * LOS + sqrt(1/(1+k)) * W)``.

    The LOS component is the all-ones matrix and W has i.i.d. CN(0, 1) entries,
    so every entry has second moment ``gain``. ``kappa=np.inf`` gives the pure
    LOS limit.
    """
    if n_r < 1 or n_t < 1:
        raise ValueError("antenna counts must be >= 1")
    if kappa < 0 or gain < 0:
        raise ValueError("kappa and gain must be non-negative")
    rng = _rng(seed)
    w = (rng.standard_normal((n_r, n_t)) + 1j * rng.standard_normal((n_r, n_t))) / np.sqrt(2)
    if np.isinf(kappa):
        los_w, nlos_w = 1.0, 0.0
    else:
        los_w, nlos_w = np.sqrt(kappa / (1 + kappa)), np.sqrt(1 / (1 + kappa))
    los = np.ones((n_r, n_t), dtype=complex)
    return np.sqrt(gain) * (los_w * los + nlos_w * w)


def kronecker_lift(base: np.ndarray, k: int) -> np.ndarray:
    """Block-diagonal ``I_K kron base``."""
    if k < 1:
        raise ValueError("number of channel uses must be >= 1")
    return np.kron(np.eye(k), np.asarray(base))


def build_channel_set(topology: Topology, links: Sequence[LinkConfig], seed: int) -> ChannelSet:
    """Generate every direct and cross channel of the scenario.

    Each (j, l) pair draws its small-scale fading from its own stream keyed by
    ``(seed, j, l)``, so moving transmitters changes only the path loss.
    """
    L = len(links)
    if topology.num_links != L:
        raise ConfigError(
            f"topology describes {topology.num_links} links but {L} link configs given")
    ks = {lk.k for lk in links}
    if L > 1 and len(ks) != 1:
        raise ConfigError(f"all links must share the same K when interfering, got {sorted(ks)}")
    dist = topology.distances()
    direct: dict[int, np.ndarray] = {}
    cross: dict[tuple[int, int], np.ndarray] = {}
    for j in range(L):
        for l in range(L):
            gain = path_loss_gain(dist[j, l], topology.path_loss_exponent,
                                  topology.reference_distance)
            base = rician_matrix((seed, j, l), links[l].n_r, links[j].n_t,
                                 topology.rice_factor, gain)
            lifted = kronecker_lift(base, links[l].k)
            if j == l:
                direct[l] = lifted
            else:
                cross[(j, l)] = lifted
    return ChannelSet(direct, cross, topology.noise_power, topology.alpha())
