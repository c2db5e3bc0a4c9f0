"""Non-cooperative power allocation game and best-response dynamics."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelSet, LinkConfig
from .errors import ConfigError, DegenerateProblem
from .semantics import SemanticPilots, truncate
from .transceiver import (
    TransceiverState,
    align_eigenbasis,
    analytic_mse,
    assemble_precoder,
    mode_gains,
    muin_covariance,
    payoff,
    semantic_gains,
    wiener_equalizer,
)

GAMMA_FLOOR = 1e-6
_BISECTION_STEPS = 200


class Scheme(str, enum.Enum):
    GAUSS_SEIDEL = "gauss-seidel"
    JACOBI = "jacobi"


@dataclass(frozen=True)
class GameConfig:
    scheme: Scheme = Scheme.GAUSS_SEIDEL
    max_iterations: int = 1000
    tolerance: float = 1e-5
    gamma0: float = 1.0
    epsilon: float = 0.01
    ne_check_trials: int = 1000
    ne_tolerance: float = 1e-6
    workers: int = 1
    eigen_tracking_tol: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not 0 < self.gamma0 <= 1:
            raise ConfigError("gamma0 must lie in (0, 1]")
        if not 0 < self.epsilon <= 1:
            raise ConfigError("epsilon must lie in (0, 1]")
        if self.tolerance < 0:
            raise ConfigError("tolerance must be >= 0")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.eigen_tracking_tol < 0:
            raise ConfigError("eigen_tracking_tol must be >= 0")


@dataclass
class Scenario:
    """Channels, pilots and link dimensions of one game instance."""

    channels: ChannelSet
    pilots: list[SemanticPilots]
    links: list[LinkConfig]

    def __post_init__(self):
        self._cache: dict[int, tuple] = {}

    @property
    def num_links(self) -> int:
        return len(self.links)

    def semantic_factors(self, l: int):
        """Cached ``(U, s, Q, sigma2)`` of the rank-K*N_T truncation of ``P_l``."""
        if l not in self._cache:
            link, pil = self.links[l], self.pilots[l]
            r = link.modes
            limit = min(pil.Y.shape[0], pil.X.shape[0])
            if r > limit:
                raise ConfigError(
                    f"link {l}: K*N_T = {r} exceeds min(m/2, d/2) = {limit}")
            U, s, Q = truncate(pil.P, r)
            self._cache[l] = (U, s, Q, semantic_gains(s, pil.n))
        return self._cache[l]

    def muin(self, l: int, precoders: Sequence[np.ndarray], include_rivals: bool = True) -> np.ndarray:
        H = self.channels.direct[l]
        rivals = self.channels.interferers(l) if include_rivals else []
        return muin_covariance([self.channels.cross[(j, l)] for j in rivals],
                               [precoders[j] for j in rivals], self.channels.sigma2,
                               dim=H.shape[0])

    def check(self) -> None:
        for l in range(self.num_links):
            self.semantic_factors(l)


@dataclass
class IterationRecord:
    iteration: int
    mse: list[float]
    payoff: list[float]
    mui_power: list[float]
    mui_power_db: list[float]
    power_used: list[float]
    step_size: float
    residual: float


@dataclass
class GameTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0

    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records if r.iteration > 0])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


@dataclass
class BestResponse:
    phi: np.ndarray
    V: np.ndarray
    lam: np.ndarray
    sigma2: np.ndarray
    Rn: np.ndarray


def waterfill_mu(lam, sigma2, n: int, budget: float) -> float:
    """Water level ``mu`` at which the allocation spends exactly ``budget``.

    Bisection on ``log(mu)`` over ``(0, mu_max]`` locates the active set, then
    ``mu`` is solved in closed form on that set.
    """
    lam = np.asarray(lam, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if budget <= 0:
        raise ValueError("budget must be positive")
    live = (lam > 0) & (sigma2 > 0)
    if not np.any(live):
        raise DegenerateProblem("no mode has positive channel and semantic gain")
    lam, sigma2 = lam[live], sigma2[live]
    thresholds = sigma2 * lam / n
    mu_max = thresholds.max()

    def spent(mu):
        return np.sum(np.maximum(np.sqrt(thresholds / mu) - 1, 0) / lam)

    hi = np.log(mu_max)
    lo = hi - 1.0
    while spent(np.exp(lo)) <= budget:
        lo -= 2 * (hi - lo)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if spent(np.exp(mid)) > budget:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    mu = np.exp(0.5 * (lo + hi))
    active = thresholds > mu
    if not np.any(active):
        active = thresholds >= thresholds.max()
    # on the active set: sum(sqrt(t/mu) - 1)/lam = budget
    num = np.sum(np.sqrt(thresholds[active]) / lam[active])
    den = budget + np.sum(1 / lam[active])
    return float((num / den) ** 2)


def waterfill(lam, sigma2, n: int, budget: float) -> np.ndarray:
    """Closed-form mode powers ``[(sqrt(sigma2 * lam / (n mu)) - 1) / lam]_+``."""
    lam = np.asarray(lam, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if lam.shape != sigma2.shape:
        raise ValueError("lambda and sigma2 must have equal length")
    if np.any(lam < 0) or np.any(sigma2 < 0) or budget < 0:
        raise ValueError("gains and budget must be non-negative")
    phi = np.zeros_like(lam)
    if budget == 0:
        return phi
    try:
        mu = waterfill_mu(lam, sigma2, n, budget)
    except DegenerateProblem:
        return phi
    live = lam > 0
    phi[live] = np.maximum(np.sqrt(sigma2[live] * lam[live] / (n * mu)) - 1, 0) / lam[live]
    return phi


def kkt_residual(phi, lam, sigma2, n: int, mu: float) -> float:
    """Largest violation of the water-filling optimality conditions."""
    phi, lam, sigma2 = (np.asarray(a, dtype=float) for a in (phi, lam, sigma2))
    marginal = sigma2 * lam / (n * (phi * lam + 1) ** 2)
    active = phi > 0
    res = np.abs(marginal[active] - mu)
    viol = np.maximum(marginal[~active] - mu, 0)
    return float(max(res.max(initial=0.0), viol.max(initial=0.0)))


def step_blend(phi, phi_hat, gamma: float) -> np.ndarray:
    if not 0 < gamma <= 1:
        raise ValueError("step size must lie in (0, 1]")
    phi = np.asarray(phi, dtype=float)
    return phi + gamma * (np.asarray(phi_hat, dtype=float) - phi)


def step_size_update(gamma: float, epsilon: float) -> float:
    return max(gamma * (1 - epsilon * gamma), GAMMA_FLOOR)


def best_response(scenario: Scenario, l: int, precoders: Sequence[np.ndarray],
                  include_rivals: bool = True, prev_basis: Optional[np.ndarray] = None,
                  tracking_tol: float = 0.0) -> BestResponse:
    """Water-filling reply of player ``l`` to a fixed snapshot of rival precoders.

    With ``prev_basis``, eigenvectors of near-degenerate modes are rotated
    towards the player's previous basis; eigenvalues, and hence the reply,
    are unaffected.
    """
    U, s, Q, sigma2 = scenario.semantic_factors(l)
    H = scenario.channels.direct[l]
    n = scenario.pilots[l].n
    Rn = scenario.muin(l, precoders, include_rivals)
    V, lam = mode_gains(H, Rn, n)
    if tracking_tol > 0:
        V = align_eigenbasis(V, lam, prev_basis, tracking_tol)
    lam = lam[: sigma2.size]
    phi = waterfill(lam, sigma2, n, scenario.links[l].budget)
    return BestResponse(phi, V, lam, sigma2, Rn)


def initial_precoders(scenario: Scenario, seed) -> list[np.ndarray]:
    """Complex Gaussian precoders rescaled to the full power budget."""
    rng = np.random.default_rng(seed)
    out = []
    for link, pil in zip(scenario.links, scenario.pilots):
        shape = (link.modes, pil.X.shape[0])
        F = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
        F *= np.sqrt(link.budget) / np.linalg.norm(F)
        out.append(F)
    return out


def mui_power(scenario: Scenario, l: int, precoders: Sequence[np.ndarray]) -> float:
    """Received interference power per channel use at receiver ``l`` (watts)."""
    rivals = scenario.channels.interferers(l)
    if not rivals:
        return 0.0
    total = 0.0
    for j in rivals:
        A = scenario.channels.cross[(j, l)] @ precoders[j]
        total += np.vdot(A, A).real
    return float(total / scenario.links[l].k)


def mui_power_db(scenario: Scenario, l: int, precoders: Sequence[np.ndarray]) -> float:
    """Interference power per channel use in dB; ``-inf`` when there are no rivals."""
    if not scenario.channels.interferers(l):
        return float("-inf")
    p = mui_power(scenario, l, precoders)
    return float(10 * np.log10(p)) if p > 0 else float("-inf")


def _record(scenario: Scenario, t: int, precoders, phis, lams, gamma, residual) -> IterationRecord:
    mse, pay, mui, mui_db, used = [], [], [], [], []
    for l in range(scenario.num_links):
        pil = scenario.pilots[l]
        Rn = scenario.muin(l, precoders)
        mse.append(analytic_mse(precoders[l], scenario.channels.direct[l], Rn, pil.P, pil.sy, pil.n, pil.PhP))
        if phis[l] is not None:
            sigma2 = scenario.semantic_factors(l)[3]
            pay.append(payoff(phis[l], lams[l], sigma2, pil.n))
            used.append(float(np.sum(phis[l])))
        else:
            pay.append(float("nan"))
            used.append(float(np.vdot(precoders[l], precoders[l]).real))
        mui.append(mui_power(scenario, l, precoders))
        mui_db.append(mui_power_db(scenario, l, precoders))
    return IterationRecord(t, mse, pay, mui, mui_db, used, gamma, residual)


def run_game(scenario: Scenario, config: GameConfig, seed) -> tuple[list[TransceiverState], GameTrace]:
    """Best-response dynamics with diminishing step size.

    Gauss-Seidel lets each player see the freshest rival precoders; Jacobi
    computes all replies against the previous iterate and commits them
    together. Stops once the largest per-mode power change drops below
    ``config.tolerance`` or after ``config.max_iterations`` iterations.
    """
    scenario.check()
    L = scenario.num_links
    precoders = initial_precoders(scenario, seed)
    phis: list[Optional[np.ndarray]] = [None] * L
    replies: list[Optional[BestResponse]] = [None] * L
    trace = GameTrace()
    trace.records.append(_record(scenario, 0, precoders, phis, [None] * L, float("nan"), float("nan")))
    gamma = config.gamma0
    pool = ThreadPoolExecutor(config.workers) if (
        config.scheme is Scheme.JACOBI and config.workers > 1) else None

    def basis(l: int) -> Optional[np.ndarray]:
        return replies[l].V if replies[l] is not None else None

    def commit(l: int, br: BestResponse) -> float:
        Q = scenario.semantic_factors(l)[2]
        prev = phis[l]
        if prev is None:
            # power the random initial precoder puts on each eigen-direction
            prev = np.sum(np.abs(br.V.conj().T @ precoders[l]) ** 2, axis=1)[: br.phi.size]
        new = step_blend(prev, br.phi, gamma)
        phis[l] = new
        replies[l] = br
        precoders[l] = assemble_precoder(br.V[:, : new.size], new, Q)
        return float(np.max(np.abs(new - prev)))

    try:
        for t in range(1, config.max_iterations + 1):
            if config.scheme is Scheme.GAUSS_SEIDEL:
                residual = 0.0
                for l in range(L):
                    br = best_response(scenario, l, precoders, prev_basis=basis(l),
                                       tracking_tol=config.eigen_tracking_tol)
                    residual = max(residual, commit(l, br))
            else:
                snapshot = list(precoders)
                fn = lambda l: best_response(  # noqa: E731
                    scenario, l, snapshot, prev_basis=basis(l),
                    tracking_tol=config.eigen_tracking_tol)
                brs = list(pool.map(fn, range(L))) if pool else [fn(l) for l in range(L)]
                residual = max(commit(l, br) for l, br in enumerate(brs))
            trace.records.append(_record(scenario, t, precoders, phis,
                                         [r.lam for r in replies], gamma, residual))
            trace.iterations_used = t
            gamma = step_size_update(gamma, config.epsilon)
            if residual < config.tolerance:
                trace.converged = True
                break
    finally:
        if pool:
            pool.shutdown()

    states = []
    for l in range(L):
        pil = scenario.pilots[l]
        H = scenario.channels.direct[l]
        Rn = scenario.muin(l, precoders)
        U, s, Q, _ = scenario.semantic_factors(l)
        br = replies[l]
        states.append(TransceiverState(
            F=precoders[l], G=wiener_equalizer(pil.P, H, precoders[l], Rn, pil.n),
            phi=phis[l], Rn=Rn, V=br.V, lam=br.lam, U=U, s=s, Q=Q))
    return states, trace


@dataclass
class NashReport:
    is_ne: bool
    worst_improvement: float
    per_player: list[dict]


def sample_feasible(rng: np.random.Generator, size: int, budget: float) -> np.ndarray:
    """Uniform simplex direction (exponential spacings) times a Uniform(0,1) budget share."""
    e = rng.exponential(size=size)
    return e / e.sum() * budget * rng.uniform()


def verify_nash(states: Sequence[TransceiverState], scenario: Scenario, trials: int,
                ne_tolerance: float, seed=0) -> NashReport:
    """Check that no player gains by deviating unilaterally.

    For each player, the payoff of its final mode powers is compared against
    its exact best response and ``trials`` random feasible deviations, all
    against the final rival precoders. Improvements are relative to the
    player's final payoff.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    precoders = [s.F for s in states]
    details = []
    worst = -np.inf
    for l in range(scenario.num_links):
        n = scenario.pilots[l].n
        br = best_response(scenario, l, precoders)
        own = payoff(states[l].phi, br.lam, br.sigma2, n)
        best = payoff(br.phi, br.lam, br.sigma2, n)
        cands = [best] + [payoff(sample_feasible(rng, br.phi.size, scenario.links[l].budget),
                                 br.lam, br.sigma2, n) for _ in range(trials)]
        gain = max(cands) - own
        if own > 0:
            rel = gain / own
        else:
            rel = np.inf if gain > 0 else 0.0
        worst = max(worst, rel)
        details.append({"player": l, "payoff": own, "best_response_payoff": best,
                        "improvement": gain, "relative_improvement": rel})
    return NashReport(bool(worst <= ne_tolerance), float(worst), details)
