"""Run configuration schema.

Configurations are YAML files validated against the models below; unknown
keys are rejected. ``apply_overrides`` patches a raw tree with
``dotted.key=value`` strings before validation (values parsed as YAML).
"""

from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class OscillatorModel(_Strict):
    name: Literal["damped_oscillator"]
    omega: float = Field(1.0, gt=0)
    alpha: float = Field(0.0, ge=0)
    variant: Literal["attractor", "canonical"] = "attractor"

    @model_validator(mode="after")
    def _underdamped(self):
        if self.alpha >= self.omega:
            raise ValueError("alpha must be smaller than omega")
        return self


class MagneticModel(_Strict):
    name: Literal["magnetic_charge"]
    e: float = 0.1
    H_field: float = 1.0
    friction: Optional[float] = None


class GenericModel(_Strict):
    name: Literal["generic"]
    A: List[List[float]]
    J: Optional[List[float]] = None


ModelConfig = Union[OscillatorModel, MagneticModel, GenericModel]


class StateConfig(_Strict):
    n: int = Field(0, ge=0)
    l: int = Field(0, ge=0)


class TimeConfig(_Strict):
    t_max: float = Field(10.0, ge=0)
    samples: int = Field(101, ge=1)


class IntegrationConfig(_Strict):
    method: Literal["auto", "DOP853", "RK45", "rk4", "expm"] = "auto"
    rtol: float = Field(1e-11, gt=0)
    atol: float = Field(1e-13, gt=0)
    step: Optional[float] = Field(None, gt=0)


class Tolerances(_Strict):
    eigen: float = 1e-8
    trace: float = 1e-10
    idempotency: float = 1e-8
    trace_product: float = 1e-9
    associativity: float = 1e-10
    omega0_independence: float = 1e-9
    liouville_order: float = 0.5
    structure: float = 1e-8


class WignerConfig(_Strict):
    times: List[float] = Field(default_factory=list)
    axes: List[int] = Field(default_factory=lambda: [0, 1])
    extent: float = Field(4.0, gt=0)
    points: int = Field(41, ge=2)


class SpectrumConfig(_Strict):
    n_max: int = Field(3, ge=0)
    l_max: int = Field(3, ge=0)
    B_eff: Optional[float] = Field(None, gt=0)


class ActionConfig(_Strict):
    x0: Optional[List[float]] = None
    t_max: float = Field(10.0, gt=0)
    grid_points: List[int] = Field(default_factory=lambda: [101, 201, 401, 801])
    eps: float = Field(1e-3, gt=0)

    @field_validator("grid_points")
    @classmethod
    def _enough(cls, v):
        if any(n < 3 for n in v):
            raise ValueError("each grid needs at least 3 points")
        return v


class VerifyConfig(_Strict):
    seed: int = 0
    random_trials: int = Field(10, ge=1)
    omega0_scale: float = 3.0
    inject_star_hbar: Optional[float] = Field(None, gt=0)


class OutputConfig(_Strict):
    dir: str = "out"
    format: Literal["csv", "json"] = "csv"


class RunConfig(_Strict):
    model: ModelConfig = Field(discriminator="name")
    hbar: float = Field(1.0, gt=0)
    state: StateConfig = Field(default_factory=StateConfig)
    time: TimeConfig = Field(default_factory=TimeConfig)
    observables: List[str] = Field(default_factory=lambda: ["H"])
    omega0: Optional[List[List[float]]] = None
    omega0_scale: float = Field(1.0, gt=0)
    integration: IntegrationConfig = Field(default_factory=IntegrationConfig)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    wigner: WignerConfig = Field(default_factory=WignerConfig)
    spectrum: SpectrumConfig = Field(default_factory=SpectrumConfig)
    action: ActionConfig = Field(default_factory=ActionConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)


def default_tree() -> Dict[str, Any]:
    return {"model": {"name": "damped_oscillator", "omega": 1.0, "alpha": 0.1}}


def apply_overrides(tree: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Set ``a.b.c=value`` entries in a nested dict (value parsed as YAML)."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ValueError(f"override key {key!r} is malformed")
        node = tree
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ValueError(f"override {key!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = yaml.safe_load(raw)
    return tree


def load_tree(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return default_tree()
    with open(path, "r", encoding="utf-8") as fh:
        tree = yaml.safe_load(fh)
    if tree is None:
        return default_tree()
    if not isinstance(tree, dict):
        raise ValueError("configuration root must be a mapping")
    return tree


def load_config(path: Optional[str], overrides: List[str] = ()) -> RunConfig:
    tree = apply_overrides(load_tree(path), list(overrides))
    return RunConfig.model_validate(tree)
