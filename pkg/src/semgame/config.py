"""Scenario configuration: YAML on disk, validated pydantic models in memory."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TopologyConfig(_Strict):
    tx_rx_distance: float = Field(30.0, gt=0)
    tx_spacing: float = Field(90.0, gt=0)
    tx_positions: Optional[list[tuple[float, float]]] = None
    rx_positions: Optional[list[tuple[float, float]]] = None
    path_loss_exponent: float = Field(2.5, ge=0)
    rice_factor: float = Field(1.5, ge=0)
    reference_distance: float = Field(1.0, gt=0)
    snr_db: float = 10.0

    @model_validator(mode="after")
    def _positions_pair(self):
        if (self.tx_positions is None) != (self.rx_positions is None):
            raise ValueError("tx_positions and rx_positions must be given together")
        return self


class LinkSpec(_Strict):
    d: int = Field(320, gt=0)
    m: int = Field(320, gt=0)
    n_t: int = Field(8, ge=1)
    n_r: int = Field(8, ge=1)
    k: int = Field(10, ge=1)
    p_max: float = Field(1.0, gt=0)

    @field_validator("d", "m")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("latent dimension must be even")
        return v

    @model_validator(mode="after")
    def _fits(self):
        if self.k * self.n_t > min(self.d, self.m) // 2:
            raise ValueError(
                f"K*N_T = {self.k * self.n_t} exceeds min(d, m)/2 = {min(self.d, self.m) // 2}")
        return self


class LatentConfig(_Strict):
    true_dim: int = Field(32, ge=1)
    class_count: int = Field(10, ge=1)
    class_separation: float = Field(3.0, ge=0)
    noise_std: float = Field(0.1, ge=0)
    n_pilots: int = Field(4096, ge=1)
    n_test: int = Field(10000, ge=0)
    seed: int = 0


class GameSection(_Strict):
    scheme: Literal["gauss-seidel", "jacobi"] = "gauss-seidel"
    max_iterations: int = Field(1000, ge=1)
    tolerance: float = Field(1e-5, ge=0)
    gamma0: float = Field(1.0, gt=0, le=1)
    epsilon: float = Field(0.01, gt=0, le=1)
    ne_check_trials: int = Field(1000, ge=1)
    ne_tolerance: float = Field(1e-6, ge=0)
    workers: int = Field(1, ge=1)
    eigen_tracking_tol: float = Field(0.1, ge=0)


class ExperimentConfig(_Strict):
    methods: list[Literal["game", "mui_less", "mui_agnostic"]] = ["game", "mui_less", "mui_agnostic"]
    seeds: list[int] = [27, 42, 100, 123, 144, 200]
    alpha_values: list[float] = [1.0, 2.0, 3.0, 5.0, 10.0, 40.0]
    xi_values: Optional[list[float]] = None

    @field_validator("alpha_values")
    @classmethod
    def _positive(cls, v):
        if any(a <= 0 for a in v):
            raise ValueError("alpha values must be positive")
        return v


class OutputConfig(_Strict):
    directory: str = "out"
    formats: list[Literal["csv", "json", "npz"]] = ["csv", "json", "npz"]


class ScenarioConfig(_Strict):
    seed: int = 42
    topology: TopologyConfig = TopologyConfig()
    links: list[LinkSpec] = Field(default_factory=lambda: [LinkSpec()], min_length=1)
    latent: LatentConfig = LatentConfig()
    game: GameSection = GameSection()
    experiment: ExperimentConfig = ExperimentConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _consistent(self):
        if len({lk.k for lk in self.links}) > 1:
            raise ValueError("all links must use the same number of channel uses K")
        topo = self.topology
        if topo.tx_positions is not None:
            if len(topo.tx_positions) != len(self.links) or len(topo.rx_positions) != len(self.links):
                raise ValueError("number of positions must match number of links")
        n_min = max(max(lk.d, lk.m) for lk in self.links)
        if self.latent.n_pilots < n_min:
            raise ValueError(f"latent.n_pilots must be >= max(d, m) = {n_min}")
        return self

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        """Short stable hash of the fully resolved configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def config_from_dict(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data or {})
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def parse_config(path) -> ScenarioConfig:
    """Read and validate a YAML scenario file.

    Raises ``FileNotFoundError`` for a missing file, ``yaml.YAMLError`` for
    malformed text and ``ConfigError`` (with dotted field paths) for schema
    violations.
    """
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is not None and not isinstance(data, dict):
        raise ConfigError("<root>: top level must be a mapping")
    return config_from_dict(data)


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
