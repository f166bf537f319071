"""Experiment configuration schema.

One JSON document per run, discriminated by ``kind``. Every kind
carries a seed (runs are bit-reproducible for a fixed config+seed),
optional per-check tolerance overrides, and its own geometry and
horizon parameters. Coordinate vectors address so(n) through the
strict-upper-triangle basis, row-major pair order.
"""

from __future__ import annotations

from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator


def _check_coords(model, names):
    d = model.n * (model.n - 1) // 2
    for name in names:
        vec = getattr(model, name)
        if vec is not None and len(vec) != d:
            raise ValueError(f"{name} must have {d} entries for so({model.n})")
    return model


class _Base(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    out: Optional[str] = None
    tol_overrides: dict[str, float] = Field(default_factory=dict)

    @field_validator("tol_overrides")
    @classmethod
    def _positive_tols(cls, v):
        for name, tol in v.items():
            if tol <= 0:
                raise ValueError(f"tolerance override {name!r} must be positive")
        return v


class _RigidBase(_Base):
    n: int = Field(default=3, ge=2, le=12)
    lam: list[float] = Field(default=[1.0, 2.0, 3.0])

    @field_validator("lam")
    @classmethod
    def _lam_matches_n(cls, v, info):
        n = info.data.get("n", 3)
        if len(v) != n:
            raise ValueError(f"lam must have {n} entries")
        return v


class SdrbConfig(_RigidBase):
    """Long run of the symmetric discrete rigid-body update."""

    kind: Literal["sdrb"]
    steps: int = Field(default=10000, ge=1)
    p0_coords: Optional[list[float]] = None
    scale: float = Field(default=0.25, gt=0)

    @model_validator(mode="after")
    def _coords(self):
        return _check_coords(self, ("p0_coords",))


class MvConfig(_RigidBase):
    """Momentum-form discrete rigid body (velocity solve + conjugation)."""

    kind: Literal["mv"]
    steps: int = Field(default=1000, ge=1)
    m0_coords: Optional[list[float]] = None
    scale: float = Field(default=0.4, gt=0)

    @model_validator(mode="after")
    def _coords(self):
        return _check_coords(self, ("m0_coords",))


class SmoothRbConfig(_RigidBase):
    """Classical smooth rigid body under RK4 with conservation checks."""

    kind: Literal["smooth-rb"]
    h: float = Field(default=1e-3, gt=0)
    t_final: float = Field(default=10.0, gt=0)
    m0_coords: Optional[list[float]] = None
    scale: float = Field(default=0.6, gt=0)

    @model_validator(mode="after")
    def _coords(self):
        return _check_coords(self, ("m0_coords",))


class SrbConfig(_RigidBase):
    """Symmetric representation (Q, P) under RK4."""

    kind: Literal["srb"]
    h: float = Field(default=1e-3, gt=0)
    t_final: float = Field(default=10.0, gt=0)
    p0_coords: Optional[list[float]] = None
    scale: float = Field(default=0.25, gt=0)

    @model_validator(mode="after")
    def _coords(self):
        return _check_coords(self, ("p0_coords",))


class OcpShootConfig(_RigidBase):
    """Rigid-body two-point boundary problem solved by shooting."""

    kind: Literal["ocp-shoot"]
    horizon: int = Field(default=10, ge=1)
    p0_scale: float = Field(default=0.2, gt=0)
    perturbation: float = Field(default=0.1, ge=0)


class ResnetDynamics(BaseModel):
    model_config = ConfigDict(extra="forbid")

    state_dim: int = Field(default=4, ge=1)
    activation: Literal["logistic", "tanh"] = "logistic"
    init_scale: float = Field(default=0.3, gt=0)


class TrainResnetConfig(_Base):
    """Train sigmoid layers against per-sample targets."""

    kind: Literal["train-resnet"]
    layers: int = Field(default=3, ge=1)
    samples: int = Field(default=5, ge=1)
    step: float = Field(default=1.0, gt=0)
    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=500, ge=1)
    dynamics: ResnetDynamics = Field(default_factory=ResnetDynamics)


class TrainRigidConfig(_RigidBase):
    """Train an SO(n) network to a reachable attitude target."""

    kind: Literal["train-rigid"]
    layers: int = Field(default=4, ge=1)
    samples: int = Field(default=1, ge=1)
    step: float = Field(default=0.5, gt=0)
    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=500, ge=1)
    running_weight: float = Field(default=0.0, ge=0)
    target_step_coords: Optional[list[float]] = None

    @model_validator(mode="after")
    def _coords(self):
        return _check_coords(self, ("target_step_coords",))


class BracketConfig(_Base):
    """Extremal flow on an adjoint orbit with the quadratic potential."""

    kind: Literal["bracket"]
    n: int = Field(default=3, ge=2, le=12)
    t_final: float = Field(default=5.0, gt=0)
    h: float = Field(default=1e-3, gt=0)
    n_coords: Optional[list[float]] = None
    x0_coords: Optional[list[float]] = None
    p0_coords: Optional[list[float]] = None
    scale: float = Field(default=0.7, gt=0)

    @model_validator(mode="after")
    def _coords(self):
        return _check_coords(self, ("n_coords", "x0_coords", "p0_coords"))


class DoubleBracketConfig(_Base):
    """Ascent double-bracket flow with monotonicity diagnostics."""

    kind: Literal["double-bracket"]
    n: int = Field(default=3, ge=2, le=12)
    t_final: float = Field(default=50.0, gt=0)
    h: float = Field(default=1e-2, gt=0)
    n_coords: Optional[list[float]] = None
    x0_coords: Optional[list[float]] = None
    scale: float = Field(default=0.7, gt=0)

    @model_validator(mode="after")
    def _coords(self):
        return _check_coords(self, ("n_coords", "x0_coords"))


ExperimentConfig = Annotated[
    Union[
        SdrbConfig,
        MvConfig,
        SmoothRbConfig,
        SrbConfig,
        OcpShootConfig,
        TrainResnetConfig,
        TrainRigidConfig,
        BracketConfig,
        DoubleBracketConfig,
    ],
    Field(discriminator="kind"),
]

KINDS = (
    "sdrb",
    "mv",
    "smooth-rb",
    "srb",
    "ocp-shoot",
    "train-resnet",
    "train-rigid",
    "bracket",
    "double-bracket",
)

config_adapter: TypeAdapter = TypeAdapter(ExperimentConfig)


def parse_config(data: dict):
    """Validate a decoded JSON document into a typed config."""
    return config_adapter.validate_python(data)
