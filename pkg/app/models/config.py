"""
Experiment configuration.

Config files are JSON objects whose keys are the ExperimentConfig field names;
unknown keys are rejected. Fields left unset are filled from the desk-scale
profile of the chosen experiment, or from the full-scale profile when
paper_scale is true.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.models.errors import ConfigError
from app.services.evt import select_kn
from app.services.mirg_graph import DEFAULT_CHUNK_SIZE, ConnectionFn, LayerKind, LayerSpec

ExperimentName = Literal["table1", "hrv_figure", "lemma_degree", "example31"]

# CLI short names
EXPERIMENT_ALIASES = {
    "table1": "table1",
    "hrv": "hrv_figure",
    "hrv_figure": "hrv_figure",
    "lemma": "lemma_degree",
    "lemma_degree": "lemma_degree",
    "example31": "example31",
}

TABLE1_ALPHAS = [1.0, 1.2, 1.4, 1.6, 1.8, 2.0]
TABLE1_KS = [100, 200, 500, 1_000, 5_000, 10_000, 100_000]
FIGURE_ALPHA0S = [1.3, 2.5]
FIGURE_KS = list(range(10, 4_001, 10))


class LayerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["multi_edge", "single_edge"]
    g: Literal["identity", "cap_one", "odds", "exp_complement"]

    def to_spec(self) -> LayerSpec:
        return LayerSpec(LayerKind(self.kind), ConnectionFn(self.g))


def _layers(*pairs) -> List[Dict[str, str]]:
    return [{"kind": kind, "g": g} for kind, g in pairs]


DESK_PROFILE: Dict[str, Dict[str, Any]] = {
    "table1": {
        "n": 100_000, "replicates": 100, "alpha": 1.4, "alphas": [1.2, 1.4, 1.6],
        "k_list": [200, 1_000],
        "layers": _layers(("multi_edge", "cap_one"), ("single_edge", "odds")),
    },
    "hrv_figure": {
        "n": 200_000, "replicates": 100, "alpha": 1.1, "k_list": FIGURE_KS,
        "layers": _layers(("multi_edge", "identity"), ("single_edge", "exp_complement")),
    },
    "lemma_degree": {
        "n": 10_000, "replicates": 10_000, "alpha": 1.8,
        "layers": _layers(("multi_edge", "identity"), ("multi_edge", "identity")),
    },
    "example31": {
        "n": 1_000_000, "replicates": 1, "alpha": 1.0, "k_list": [1_000],
        "layers": _layers(("multi_edge", "identity"), ("multi_edge", "identity")),
    },
}

FULL_PROFILE: Dict[str, Dict[str, Any]] = {
    "table1": {"n": 1_000_000, "replicates": 1_000, "alphas": TABLE1_ALPHAS, "k_list": TABLE1_KS},
    "hrv_figure": {"n": 2_000_000, "replicates": 1_000},
    "lemma_degree": {"replicates": 100_000},
    "example31": {},
}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    n: Optional[int] = None
    replicates: Optional[int] = None
    alpha: Optional[float] = None
    alphas: Optional[List[float]] = None
    alpha0: Optional[float] = None
    alpha0s: Optional[List[float]] = None
    k_list: Optional[List[int]] = None
    kappa: Optional[float] = None
    layers: Optional[List[LayerConfig]] = None
    p: float = 1.0
    seed: int = Field(default=20_240_901, ge=0, lt=2 ** 64)
    parallelism: int = Field(default=1, ge=1)
    output_dir: Path = Path("results")
    paper_scale: bool = False
    method: Literal["fast", "naive"] = "fast"
    chunk_size: int = Field(default=DEFAULT_CHUNK_SIZE, ge=1)
    slope: float = 1.5
    grid_max: int = Field(default=5, ge=0)
    asymptotic_replicates: Optional[int] = None
    u_grid: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    v_grid: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])

    @model_validator(mode="before")
    @classmethod
    def fill_profile(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = {key: value for key, value in data.items() if value is not None}
        name = EXPERIMENT_ALIASES.get(data.get("experiment"), data.get("experiment"))
        data["experiment"] = name
        profile = dict(DESK_PROFILE.get(name, {}))
        if data.get("paper_scale"):
            profile.update(FULL_PROFILE.get(name, {}))
        # an explicit single alpha replaces the profile's sweep
        if "alpha" in data and "alphas" not in data:
            profile.pop("alphas", None)
        if "kappa" in data and "k_list" not in data:
            profile.pop("k_list", None)
        return {**profile, **data}

    @model_validator(mode="after")
    def check_ranges(self) -> "ExperimentConfig":
        if self.n is None or self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.replicates is None or self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        for alpha in self.alpha_values():
            if not alpha > 0:
                raise ValueError(f"alpha must be > 0, got {alpha}")
        if self.experiment == "hrv_figure":
            for alpha0 in self.alpha0_values():
                if alpha0 < self.alpha:
                    raise ValueError(f"alpha0 must be >= alpha, got alpha0={alpha0} < alpha={self.alpha}")
        elif self.alpha0 is not None and self.alpha is not None and self.alpha0 < self.alpha:
            raise ValueError(f"alpha0 must be >= alpha, got alpha0={self.alpha0} < alpha={self.alpha}")
        if self.k_list is not None and any(k < 1 for k in self.k_list):
            raise ValueError("every k in k_list must be >= 1")
        if not (self.p >= 1):
            raise ValueError(f"norm order p must be >= 1 or inf, got {self.p}")
        return self

    def alpha_values(self) -> List[float]:
        return list(self.alphas) if self.alphas else [self.alpha]

    def alpha0_values(self) -> List[float]:
        if self.alpha0s:
            return list(self.alpha0s)
        return [self.alpha0] if self.alpha0 is not None else list(FIGURE_ALPHA0S)

    def layer_specs(self) -> List[LayerSpec]:
        return [layer.to_spec() for layer in self.layers or []]

    def ks_for(self, alpha: float) -> List[int]:
        """cfg.k_list, or the single select_kn value when only kappa is given."""
        if self.k_list:
            return sorted(set(self.k_list))
        if self.kappa is not None:
            return [select_kn(self.n, alpha, self.kappa)]
        raise ConfigError("either k_list or kappa must be set")


def build_config(values: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment configuration: {e}") from e


def load_config(path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Read a JSON config (if given) and apply non-None overrides on top."""
    values: Dict[str, Any] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                values = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from e
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: top level must be an object")
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return build_config(values)
