"""Closed-form per-link semantic transceiver design.

Conventions, fixed by the whitened pilots ``X X^H = n I``:

* The Wiener equalizer minimizing the pilot objective
  ``J(F, G) = (1/n) ||Y - G H F X||_F^2 + tr(G Rn G^H)`` is
  ``G = P A^H (A X X^H A^H + n Rn)^{-1} = (1/n) P A^H (A A^H + Rn)^{-1}``
  with ``A = H F``. The frequently quoted form ``P A^H (A A^H + n Rn)^{-1}``
  scales ``A A^H`` differently and is not the minimizer of J under this
  pilot normalization; we always use the first-principles form.
* At that equalizer,
  ``J = tr(Y Y^H)/n - tr(P P^H)/n^2 + tr((I + F^H H^H Rn^{-1} H F)^{-1} P^H P)/n^2``.
  The effective channel covariance carries a ``1/n``
  (``R_H = H^H Rn^{-1} H / n``), so the per-mode gains entering the power
  allocation are ``lambda = n * eig(R_H) = eig(H^H Rn^{-1} H)`` and the
  semantic gains are ``sigma2 = s**2 / n`` with ``s`` the singular values of
  ``P``. With those, for a precoder ``F = V diag(sqrt(phi)) Q^H`` the MSE is
  exactly ``tr(Y Y^H)/n - payoff(phi)``, compression or not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

HERMITIAN_TOL = 1e-8


@dataclass
class TransceiverState:
    """Per-link design: precoder, equalizer, mode powers and cached factors."""

    F: np.ndarray
    G: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    Rn: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def power(self) -> float:
        return float(np.vdot(self.F, self.F).real)


def hermitize(M: np.ndarray) -> np.ndarray:
    return (M + M.conj().T) / 2


def muin_covariance(cross_channels: Sequence[np.ndarray], rival_precoders: Sequence[np.ndarray],
                    sigma2: float, dim: Optional[int] = None) -> np.ndarray:
    """Interference-plus-noise covariance ``sum_j (H_j F_j)(H_j F_j)^H + sigma2 I``."""
    if len(cross_channels) != len(rival_precoders):
        raise ValueError("one precoder is needed per cross channel")
    if dim is None:
        if not cross_channels:
            raise ValueError("dimension required when there are no rivals")
        dim = cross_channels[0].shape[0]
    Rn = sigma2 * np.eye(dim, dtype=complex)
    for H, F in zip(cross_channels, rival_precoders):
        if H.shape[0] != dim or H.shape[1] != F.shape[0]:
            raise ValueError(f"cross channel {H.shape} does not conform with precoder {F.shape}")
        A = H @ F
        Rn += A @ A.conj().T
    return hermitize(Rn)


def effective_channel_cov(H: np.ndarray, Rn: np.ndarray, n: int) -> np.ndarray:
    """``R_H = H^H Rn^{-1} H / n``."""
    return hermitize(H.conj().T @ np.linalg.solve(Rn, H)) / n


def eig_descending(R: np.ndarray):
    """Eigenpairs of a Hermitian PSD matrix, eigenvalues non-increasing and clamped at 0."""
    scale = max(np.abs(R).max(), 1.0)
    if np.abs(R - R.conj().T).max() > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    w, V = np.linalg.eigh(hermitize(R))
    w, V = w[::-1], V[:, ::-1]
    return np.clip(w, 0.0, None), V


def assemble_precoder(V: np.ndarray, phi: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``F = V diag(sqrt(phi)) Q^H``; ``phi`` holds per-mode powers."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0):
        raise ValueError("mode powers must be non-negative")
    if V.shape[1] != phi.size or Q.shape[1] != phi.size:
        raise ValueError("V, phi and Q disagree on the number of modes")
    return (V * np.sqrt(phi)) @ Q.conj().T


def wiener_equalizer(P: np.ndarray, H: np.ndarray, F: np.ndarray, Rn: np.ndarray,
                     n: int) -> np.ndarray:
    """Minimizer of the pilot objective for fixed ``F``: ``(1/n) P A^H (A A^H + Rn)^{-1}``."""
    A = H @ F
    S = hermitize(A @ A.conj().T + Rn)
    # G S = P A^H / n  <=>  S G^H = A P^H / n  (S Hermitian)
    return np.linalg.solve(S, A @ P.conj().T).conj().T / n


def direct_objective(F: np.ndarray, G: np.ndarray, H: np.ndarray, Rn: np.ndarray,
                     X: np.ndarray, Y: np.ndarray, n: Optional[int] = None) -> float:
    """Pilot MSE averaged over the MUIN: ``||Y - G H F X||^2 / n + tr(G Rn G^H)``."""
    n = X.shape[1] if n is None else n
    E = Y - G @ (H @ (F @ X))
    return float(np.vdot(E, E).real / n + np.einsum("ij,jk,ik->", G, Rn, G.conj()).real)


def analytic_mse(F: np.ndarray, H: np.ndarray, Rn: np.ndarray, P: np.ndarray, sy: float,
                 n: int, PhP: Optional[np.ndarray] = None) -> float:
    """Pilot MSE at the Wiener equalizer, as a function of ``F`` only."""
    A = H @ F
    M = A.conj().T @ np.linalg.solve(Rn, A)
    C = hermitize(M) + np.eye(M.shape[0])
    if PhP is None:
        PhP = P.conj().T @ P
    tail = np.trace(np.linalg.solve(C, PhP)).real
    return float(sy / n - np.vdot(P, P).real / n**2 + tail / n**2)


def payoff(phi, lam, sigma2, n: int) -> float:
    """Concave player payoff ``(1/n) sum phi*lam*sigma2 / (phi*lam + 1)``."""
    phi, lam, sigma2 = (np.asarray(a, dtype=float) for a in (phi, lam, sigma2))
    if not phi.shape == lam.shape == sigma2.shape:
        raise ValueError("phi, lambda and sigma2 must have equal length")
    g = phi * lam
    return float(np.sum(g * sigma2 / (g + 1)) / n)


def approx_diagonal_mse(phi, lam, sigma2, n: int, sy: float) -> float:
    """Diagonalized MSE ``tr(Y Y^H)/n - payoff``.

    Exact for precoders assembled from the eigenvectors behind ``lam`` and the
    leading right singular vectors of ``P`` (see module docstring for the gain
    normalization).
    """
    return sy / n - payoff(phi, lam, sigma2, n)


def mode_gains(H: np.ndarray, Rn: np.ndarray, n: int):
    """Eigen-decompose ``R_H`` and return ``(V, lam)`` with ``lam = n * eig(R_H)``."""
    w, V = eig_descending(effective_channel_cov(H, Rn, n))
    return V, n * w


def align_eigenbasis(V: np.ndarray, lam: np.ndarray, V_ref: Optional[np.ndarray],
                     rel_tol: float) -> np.ndarray:
    """Rotate eigenvectors inside clusters of near-equal eigenvalues towards ``V_ref``.

    Consecutive eigenvalues closer than ``rel_tol`` (relative) form a cluster
    whose basis is ill-determined; each cluster block is replaced by the
    unitary rotation of itself closest to the matching block of ``V_ref``
    (orthogonal Procrustes). Isolated eigenvectors only get their phase
    aligned. Spans are unchanged.
    """
    if V_ref is None or V_ref.shape != V.shape:
        return V
    out = V.copy()
    scale = np.maximum(lam, np.finfo(float).tiny)
    breaks = np.flatnonzero((lam[:-1] - lam[1:]) > rel_tol * scale[:-1]) + 1
    for block in np.split(np.arange(lam.size), breaks):
        B = V[:, block]
        Uo, _, Wh = np.linalg.svd(B.conj().T @ V_ref[:, block])
        out[:, block] = B @ (Uo @ Wh)
    return out


def semantic_gains(s: np.ndarray, n: int) -> np.ndarray:
    """Per-mode semantic weights ``s**2 / n`` from singular values of ``P``."""
    return np.asarray(s) ** 2 / n
