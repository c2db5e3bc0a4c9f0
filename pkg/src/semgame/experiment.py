"""Scenario assembly, benchmark methods, task proxy and parameter sweeps."""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .channel import LinkConfig, Topology, build_channel_set, path_loss_gain
from .config import ScenarioConfig
from .errors import ConfigError
from .game import GameConfig, GameTrace, Scenario, best_response, mui_power, run_game
from .semantics import LatentModel, LatentSet, synthesize_latents, unpair_complex_to_real
from .transceiver import (
    TransceiverState,
    analytic_mse,
    assemble_precoder,
    direct_objective,
    wiener_equalizer,
)

METHODS = ("game", "mui_less", "mui_agnostic")
DEFAULT_XI = (0.01, 0.05, 0.10, 0.25, 0.50, 1.00)


def to_db(x: float) -> float:
    return 10 * math.log10(x) if x > 0 else float("-inf")


def link_configs(config: ScenarioConfig, k: Optional[int] = None) -> list[LinkConfig]:
    return [LinkConfig(s.d, s.m, s.n_t, s.n_r, s.k if k is None else k, s.p_max)
            for s in config.links]


def noise_power(config: ScenarioConfig, topology: Topology, links: Sequence[LinkConfig]) -> float:
    """Noise level giving the configured receive SNR, averaged over the intended links."""
    t = config.topology
    dist = np.diag(topology.distances())
    snr = 10 ** (t.snr_db / 10)
    levels = [path_loss_gain(dl, t.path_loss_exponent, t.reference_distance) * lk.p_max / snr
              for dl, lk in zip(dist, links)]
    return float(np.mean(levels))


def build_topology(config: ScenarioConfig, alpha: Optional[float] = None) -> Topology:
    t = config.topology
    L = len(config.links)
    kwargs = dict(path_loss_exponent=t.path_loss_exponent, rice_factor=t.rice_factor,
                  reference_distance=t.reference_distance)
    if alpha is not None or t.tx_positions is None:
        spacing = t.tx_spacing if alpha is None else alpha * t.tx_rx_distance
        geo = Topology.linear_array(L, t.tx_rx_distance, spacing, **kwargs)
    else:
        geo = Topology(np.array(t.tx_positions), np.array(t.rx_positions), **kwargs)
    links = [LinkConfig(s.d, s.m, s.n_t, s.n_r, s.k, s.p_max) for s in config.links]
    sigma2 = noise_power(config, geo, links)
    return Topology(geo.tx_positions, geo.rx_positions, noise_power=sigma2, **kwargs)


@functools.lru_cache(maxsize=32)
def _latents_cached(seed: int, true_dim: int, d: int, m: int, class_count: int, sep: float,
                    noise_std: float, n: int, n_test: int, link: int) -> LatentSet:
    model = LatentModel.random((seed, link, 0), true_dim, d, m, class_count, sep, noise_std)
    return synthesize_latents(model, n, (seed, link, 1), n_test=n_test, link=link)


def build_latents(config: ScenarioConfig) -> list[LatentSet]:
    lat = config.latent
    return [_latents_cached(lat.seed, lat.true_dim, s.d, s.m, lat.class_count,
                            lat.class_separation, lat.noise_std, lat.n_pilots, lat.n_test, l)
            for l, s in enumerate(config.links)]


def build_scenario(config: ScenarioConfig, seed: int, alpha: Optional[float] = None,
                   k: Optional[int] = None) -> tuple[Scenario, list[LatentSet]]:
    """Channels for ``seed`` plus the (seed-independent) latent spaces of every link."""
    links = link_configs(config, k)
    for l, lk in enumerate(links):
        if lk.modes > min(lk.d, lk.m) // 2:
            raise ConfigError(f"links.{l}: K*N_T = {lk.modes} exceeds min(d, m)/2")
    topo = build_topology(config, alpha)
    channels = build_channel_set(topo, links, seed)
    latents = build_latents(config)
    return Scenario(channels, [ls.pilots for ls in latents], links), latents


def game_config(config: ScenarioConfig, **overrides) -> GameConfig:
    g = config.game.model_dump()
    g.update({k: v for k, v in overrides.items() if v is not None})
    return GameConfig(**g)


def mui_less_baseline(scenario: Scenario) -> list[TransceiverState]:
    """Single-pass design of every link as if alone (Rn = sigma2 I)."""
    states = []
    for l in range(scenario.num_links):
        pil = scenario.pilots[l]
        H = scenario.channels.direct[l]
        br = best_response(scenario, l, [], include_rivals=False)
        U, s, Q, _ = scenario.semantic_factors(l)
        F = assemble_precoder(br.V[:, : br.phi.size], br.phi, Q)
        G = wiener_equalizer(pil.P, H, F, br.Rn, pil.n)
        states.append(TransceiverState(F=F, G=G, phi=br.phi, Rn=br.Rn, V=br.V, lam=br.lam,
                                       U=U, s=s, Q=Q))
    return states


def mui_agnostic_baseline(scenario: Scenario) -> list[TransceiverState]:
    """Interference-blind designs, re-labelled with the true MUIN they will face."""
    blind = mui_less_baseline(scenario)
    precoders = [s.F for s in blind]
    for l, st in enumerate(blind):
        st.extra["design_Rn"] = st.Rn
        st.Rn = scenario.muin(l, precoders)
    return blind


@dataclass
class MethodResult:
    method: str
    player_mse: list[float]
    accuracy: list[float]
    mui_power: list[float]
    states: list[TransceiverState] = field(repr=False, default_factory=list)
    trace: Optional[GameTrace] = field(repr=False, default=None)

    @property
    def network_mse(self) -> float:
        return float(np.mean(self.player_mse))

    @property
    def network_mse_db(self) -> float:
        return to_db(self.network_mse)

    @property
    def network_accuracy(self) -> float:
        return float(np.mean(self.accuracy)) if self.accuracy else float("nan")

    @property
    def mui_power_db(self) -> float:
        if self.method == "mui_less" or not self.mui_power:
            return float("-inf")
        return to_db(float(np.mean(self.mui_power)))


def nearest_mean_accuracy(s_hat: np.ndarray, class_means: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of columns of ``s_hat`` whose closest class mean has the right label."""
    if s_hat.shape[1] == 0:
        raise ValueError("empty test set")
    d2 = (np.sum(s_hat**2, axis=0)[None, :] - 2 * class_means @ s_hat
          + np.sum(class_means**2, axis=1)[:, None])
    return float(np.mean(np.argmin(d2, axis=0) == labels))


def task_proxy_accuracy(scenario: Scenario, states: Sequence[TransceiverState],
                        latents: Sequence[LatentSet], interference: bool = True,
                        seed=0) -> list[float]:
    """Push each link's held-out latents through F, the channel, MUIN and G.

    Rival links transmit their own held-out latents; noise and test data are
    shared across methods for a given ``seed`` so comparisons use common
    random numbers.
    """
    L = scenario.num_links
    tx = [latents[l].prepare_tx(latents[l].test_tx) for l in range(L)]
    sent = [states[l].F @ tx[l] for l in range(L)]
    acc = []
    for l in range(L):
        ls = latents[l]
        if ls.test_labels.size == 0:
            raise ValueError(f"link {l} has an empty test set")
        H = scenario.channels.direct[l]
        r = H @ sent[l]
        if interference:
            for j in scenario.channels.interferers(l):
                ns = min(sent[j].shape[1], r.shape[1])
                r[:, :ns] += scenario.channels.cross[(j, l)] @ sent[j][:, :ns]
        rng = np.random.default_rng((seed, l, 7))
        noise = (rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape))
        r = r + np.sqrt(scenario.channels.sigma2 / 2) * noise
        s_hat = unpair_complex_to_real(states[l].G @ r)
        acc.append(nearest_mean_accuracy(s_hat, ls.class_means_rx, ls.test_labels))
    return acc


def evaluate_method(method: str, scenario: Scenario, latents: Sequence[LatentSet],
                    gcfg: GameConfig, seed: int, accuracy: bool = True) -> MethodResult:
    """Design one benchmark and score MSE, task accuracy and MUI power."""
    L = scenario.num_links
    trace = None
    if method == "game":
        states, trace = run_game(scenario, gcfg, seed)
    elif method == "mui_less":
        states = mui_less_baseline(scenario)
    elif method == "mui_agnostic":
        states = mui_agnostic_baseline(scenario)
    else:
        raise ValueError(f"unknown method {method!r}")
    mse = []
    for l, st in enumerate(states):
        pil = scenario.pilots[l]
        H = scenario.channels.direct[l]
        if method == "mui_agnostic":
            mse.append(direct_objective(st.F, st.G, H, st.Rn, pil.X, pil.Y, pil.n))
        else:
            mse.append(analytic_mse(st.F, H, st.Rn, pil.P, pil.sy, pil.n, pil.PhP))
    precoders = [s.F for s in states]
    mui = [mui_power(scenario, l, precoders) for l in range(L)]
    acc = (task_proxy_accuracy(scenario, states, latents, method != "mui_less", seed)
           if accuracy else [])
    return MethodResult(method, mse, acc, mui, states, trace)


def xi_to_k(xi: float, link: LinkConfig) -> float:
    """Channel uses carrying a fraction ``xi`` of the d/2 complex latent symbols."""
    return xi * (link.d // 2) / link.n_t


def resolve_xi(config: ScenarioConfig, xi_values: Optional[Iterable[float]] = None) -> list[tuple[float, int]]:
    """Map compression factors to integer K, validating every value first.

    Explicit values must map to an integer K exactly; the default grid is
    rounded to the nearest valid K and de-duplicated.
    """
    links = link_configs(config)
    ref = links[0]
    k_max = min(min(lk.d, lk.m) // 2 // lk.n_t for lk in links)
    valid = [k * ref.n_t / (ref.d // 2) for k in range(1, k_max + 1)]
    explicit = xi_values if xi_values is not None else config.experiment.xi_values
    out: list[tuple[float, int]] = []
    if explicit is None:
        for xi in DEFAULT_XI:
            k = int(min(max(round(xi_to_k(xi, ref)), 1), k_max))
            if k not in [kk for _, kk in out]:
                out.append((k * ref.n_t / (ref.d // 2), k))
        return out
    bad = []
    for xi in explicit:
        kf = xi_to_k(xi, ref)
        k = int(round(kf))
        if xi <= 0 or abs(kf - k) > 1e-9 or not 1 <= k <= k_max:
            bad.append(xi)
        else:
            out.append((float(xi), k))
    if bad:
        shown = ", ".join(f"{v:g}" for v in valid)
        raise ConfigError(f"compression factors {bad} do not map to a valid integer K; valid: {shown}")
    return out


@dataclass
class SweepRecord:
    axis: str
    axis_value: float
    method: str
    seed: int
    k: int
    player_mse_db: list[float]
    network_mse_db: float
    network_accuracy: float
    mui_power_db: float
    converged: Optional[bool] = None


@dataclass
class SweepResult:
    axis: str
    methods: list[str]
    seeds: list[int]
    records: list[SweepRecord]

    def aggregate(self) -> list[dict]:
        """Mean and min-max band across seeds for each (axis value, method)."""
        groups: dict[tuple[float, str], list[SweepRecord]] = {}
        for r in self.records:
            groups.setdefault((r.axis_value, r.method), []).append(r)
        rows = []
        for (v, method), recs in groups.items():
            row = {"axis_value": v, "method": method}
            for key in ("network_mse_db", "network_accuracy", "mui_power_db"):
                vals = np.array([getattr(r, key) for r in recs], dtype=float)
                finite = vals[np.isfinite(vals)]
                row[key] = {
                    "mean": float(finite.mean()) if finite.size else None,
                    "min": float(finite.min()) if finite.size else None,
                    "max": float(finite.max()) if finite.size else None,
                }
            rows.append(row)
        return rows

    def series(self, method: str, key: str = "network_mse_db") -> tuple[np.ndarray, np.ndarray]:
        """Seed-averaged ``key`` against the axis, in axis order."""
        vals: dict[float, list[float]] = {}
        for r in self.records:
            if r.method == method:
                vals.setdefault(r.axis_value, []).append(getattr(r, key))
        xs = np.array(list(vals))
        if key == "network_mse_db":
            # average MSE in linear scale, then convert
            ys = np.array([to_db(np.mean([10 ** (v / 10) for v in vals[x]])) for x in xs])
        else:
            ys = np.array([np.mean(vals[x]) for x in xs])
        return xs, ys


def _run_cell(config: ScenarioConfig, axis: str, value: float, seed: int, methods: Sequence[str],
              gcfg: GameConfig, alpha=None, k=None) -> list[SweepRecord]:
    scenario, latents = build_scenario(config, seed, alpha=alpha, k=k)
    out = []
    for method in methods:
        res = evaluate_method(method, scenario, latents, gcfg, seed)
        out.append(SweepRecord(
            axis, float(value), method, seed, scenario.links[0].k,
            [to_db(v) for v in res.player_mse], res.network_mse_db, res.network_accuracy,
            res.mui_power_db, res.trace.converged if res.trace else None))
    return out


def sweep_alpha(config: ScenarioConfig, alpha_values: Optional[Sequence[float]] = None,
                methods: Optional[Sequence[str]] = None, seeds: Optional[Sequence[int]] = None,
                gcfg: Optional[GameConfig] = None) -> SweepResult:
    alphas = list(alpha_values if alpha_values is not None else config.experiment.alpha_values)
    if any(a <= 0 for a in alphas):
        raise ConfigError("alpha values must be positive")
    methods = list(methods or config.experiment.methods)
    seeds = list(seeds if seeds is not None else config.experiment.seeds)
    gcfg = gcfg or game_config(config)
    records = []
    for a in alphas:
        for seed in seeds:
            records += _run_cell(config, "alpha", a, seed, methods, gcfg, alpha=a)
    return SweepResult("alpha", methods, seeds, _order(records, alphas, methods, seeds))


def sweep_compression(config: ScenarioConfig, xi_values: Optional[Sequence[float]] = None,
                      methods: Optional[Sequence[str]] = None, seeds: Optional[Sequence[int]] = None,
                      gcfg: Optional[GameConfig] = None) -> SweepResult:
    grid = resolve_xi(config, xi_values)
    methods = list(methods or config.experiment.methods)
    seeds = list(seeds if seeds is not None else config.experiment.seeds)
    gcfg = gcfg or game_config(config)
    records = []
    for xi, k in grid:
        for seed in seeds:
            records += _run_cell(config, "xi", xi, seed, methods, gcfg, k=k)
    return SweepResult("xi", methods, seeds, _order(records, [x for x, _ in grid], methods, seeds))


def _order(records, values, methods, seeds):
    key = {(float(v), m, s): i for i, (v, m, s) in enumerate(
        (v, m, s) for v in values for m in methods for s in seeds)}
    return sorted(records, key=lambda r: key[(r.axis_value, r.method, r.seed)])


TRACE_HEADER = ["config_hash", "seed", "iteration", "player", "mse", "mse_db", "payoff",
                "mui_power_w", "mui_power_db", "power_used", "step_size", "residual"]
SWEEP_HEADER = ["config_hash", "axis", "axis_value", "method", "seed", "k", "network_mse_db",
                "network_accuracy", "mui_power_db", "player_mse_db", "converged"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "n/a" if x < 0 else "inf"
        return repr(x)
    return str(x)


def write_trace_csv(path, trace: GameTrace, config_hash: str, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for rec in trace.records:
            for l in range(len(rec.mse)):
                w.writerow([_fmt(v) for v in (
                    config_hash, seed, rec.iteration, l, rec.mse[l], to_db(rec.mse[l]),
                    rec.payoff[l], rec.mui_power[l], rec.mui_power_db[l], rec.power_used[l],
                    rec.step_size, rec.residual)])


def write_sweep_csv(path, result: SweepResult, config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in result.records:
            w.writerow([_fmt(v) for v in (
                config_hash, r.axis, r.axis_value, r.method, r.seed, r.k, r.network_mse_db,
                r.network_accuracy, r.mui_power_db,
                ";".join(_fmt(v) for v in r.player_mse_db), r.converged)])


def empirical_mse(scenario: Scenario, states: Sequence[TransceiverState], l: int,
                  seed=0) -> float:
    """Pilot MSE of link ``l`` with interference and noise actually sampled.

    The link's own pilots go through ``F_l``; every rival sends fresh
    white CN(0, I) symbols through its precoder, and receiver noise is drawn
    at ``sigma2``. The expectation of this quantity is ``direct_objective``.
    """
    rng = np.random.default_rng(seed)
    pil = scenario.pilots[l]
    H = scenario.channels.direct[l]
    r = H @ (states[l].F @ pil.X)
    for j in scenario.channels.interferers(l):
        shape = (states[j].F.shape[1], pil.n)
        xj = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
        r += scenario.channels.cross[(j, l)] @ (states[j].F @ xj)
    v = rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape)
    r += np.sqrt(scenario.channels.sigma2 / 2) * v
    E = pil.Y - states[l].G @ r
    return float(np.vdot(E, E).real / pil.n)
