"""Experiment configuration: pydantic models plus YAML/TOML loading."""

from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .environments import (
    AdversarialEnv,
    Cdf,
    CustomSamplerEnv,
    DiscreteEnv,
    Environment,
    ProductCdfEnv,
    SmoothMixtureEnv,
    SmoothSequenceEnv,
    equal_revenue_dist,
    uniform_env,
)
from .mechanism import Mechanism, as_rational
from .solver import DiscreteDistribution

Number = Union[int, float, str]


class ConfigError(ValueError):
    """Raised for unusable configuration or input files."""


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DiscreteSpec(_Spec):
    kind: Literal["discrete"]
    atoms: Optional[list[tuple[Number, Number, Number]]] = None
    file: Optional[str] = None

    @field_validator("file")
    @classmethod
    def _one_source(cls, v, info):
        if v is not None and info.data.get("atoms") is not None:
            raise ValueError("give either atoms or file, not both")
        return v


class EqualRevenueSpec(_Spec):
    kind: Literal["equal_revenue"]
    n: int = Field(ge=1, le=60)
    delta: Number


class UniformSpec(_Spec):
    kind: Literal["uniform"]


class ProductCdfSpec(_Spec):
    kind: Literal["product_cdf"]
    f1: Union[dict, float]
    f2: Union[dict, float]


class SmoothMixtureSpec(_Spec):
    kind: Literal["smooth_mixture"]
    alpha: float

    @field_validator("alpha")
    @classmethod
    def _range(cls, v):
        if not (4 / 15 < v < 2 / 5):
            raise ValueError("alpha must lie in (4/15, 2/5)")
        return v


class AdversarialSpec(_Spec):
    kind: Literal["adversarial"]
    delta: Number
    zeta: Number


class CustomSamplerSpec(_Spec):
    kind: Literal["custom_sampler"]
    target: str


class SmoothSequenceSpec(_Spec):
    kind: Literal["smooth_sequence"]
    phases: list[Annotated[Union[UniformSpec, ProductCdfSpec, SmoothMixtureSpec], Field(discriminator="kind")]]
    period: int = Field(default=1, ge=1)


EnvSpec = Annotated[
    Union[
        DiscreteSpec,
        EqualRevenueSpec,
        UniformSpec,
        ProductCdfSpec,
        SmoothMixtureSpec,
        SmoothSequenceSpec,
        AdversarialSpec,
        CustomSamplerSpec,
    ],
    Field(discriminator="kind"),
]


class LearnerSpec(_Spec):
    kind: Literal["atbm", "path_learning", "fixed", "posted_price"]
    path: Optional[list[tuple[Number, Number]]] = None
    p1: Optional[Number] = None
    p2: Optional[Number] = None


class Constants(_Spec):
    atbm_constant: float = Field(default=14.0, gt=0)
    refresh_growth: float = Field(default=2.0, ge=1)
    hedge_eta: Optional[float] = Field(default=None, gt=0, le=1)
    epsilon: Optional[Number] = None

    @field_validator("epsilon")
    @classmethod
    def _grid_step(cls, v):
        if v is None:
            return v
        eps = as_rational(v)
        if not (0 < eps <= 1) or (1 / eps).denominator != 1:
            raise ValueError("epsilon must lie in (0, 1] with 1/epsilon an integer")
        return v


class Outputs(_Spec):
    rounds_csv: str = "rounds.csv"
    report: str = "report.json"
    write_rounds: bool = True


class ExperimentConfig(_Spec):
    environment: EnvSpec
    learner: LearnerSpec
    horizon: int = Field(ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    constants: Constants = Field(default_factory=Constants)
    outputs: Outputs = Field(default_factory=Outputs)
    sweep_horizons: Optional[list[int]] = None

    @field_validator("sweep_horizons")
    @classmethod
    def _positive(cls, v):
        if v is not None and (len(v) < 1 or any(h < 1 for h in v)):
            raise ValueError("sweep horizons must be positive")
        return v


def parse_config_text(text: str, fmt: str) -> dict:
    try:
        if fmt == "toml":
            return tomllib.loads(text)
        data = yaml.safe_load(text)
    except (yaml.YAMLError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    fmt = "toml" if path.suffix.lower() == ".toml" else "yaml"
    return validate_config(parse_config_text(text, fmt), base=path.parent)


def validate_config(data: dict, base: Path | None = None) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config:\n{exc}") from None
    env = cfg.environment
    if isinstance(env, DiscreteSpec) and env.file is not None and base is not None:
        p = Path(env.file)
        if not p.is_absolute():
            env.file = str(base / p)
    # catch semantic errors (bad CDFs, bad atoms) at load time
    build_environment(cfg.environment)
    if cfg.learner.kind == "fixed" and not cfg.learner.path:
        raise ConfigError("fixed learner needs a path")
    if cfg.learner.kind == "posted_price" and (cfg.learner.p1 is None or cfg.learner.p2 is None):
        raise ConfigError("posted_price learner needs p1 and p2")
    return cfg


def read_distribution(path: str | Path) -> DiscreteDistribution:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        return DiscreteDistribution.parse(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_environment(spec) -> Environment:
    try:
        if isinstance(spec, DiscreteSpec):
            if spec.file is not None:
                dist = read_distribution(spec.file)
            elif spec.atoms:
                dist = DiscreteDistribution(tuple(((a, b), p) for a, b, p in spec.atoms))
            else:
                raise ConfigError("discrete environment needs atoms or file")
            return DiscreteEnv(dist)
        if isinstance(spec, EqualRevenueSpec):
            return DiscreteEnv(equal_revenue_dist(spec.n, spec.delta), name="equal_revenue")
        if isinstance(spec, UniformSpec):
            return uniform_env()
        if isinstance(spec, ProductCdfSpec):
            return ProductCdfEnv(Cdf(spec.f1), Cdf(spec.f2))
        if isinstance(spec, SmoothMixtureSpec):
            return SmoothMixtureEnv(spec.alpha)
        if isinstance(spec, SmoothSequenceSpec):
            return SmoothSequenceEnv([build_environment(p) for p in spec.phases], spec.period)
        if isinstance(spec, AdversarialSpec):
            return AdversarialEnv(as_rational(spec.delta), as_rational(spec.zeta))
        if isinstance(spec, CustomSamplerSpec):
            return CustomSamplerEnv(spec.target)
    except ConfigError:
        raise
    except (ValueError, ZeroDivisionError, ImportError, AttributeError) as exc:
        raise ConfigError(f"bad environment: {exc}") from None
    raise ConfigError(f"unsupported environment {spec!r}")


def fixed_mechanism(spec: LearnerSpec) -> Mechanism:
    try:
        if spec.kind == "fixed":
            return Mechanism.from_boundary(spec.path)
        return Mechanism.posted_price(spec.p1, spec.p2)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad mechanism: {exc}") from None


def epsilon_override(c: Constants) -> Fraction | None:
    return None if c.epsilon is None else as_rational(c.epsilon)
