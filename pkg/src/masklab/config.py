"""Flat JSON run configuration shared by the CLI subcommands."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .crf import CrfParams
from .errors import ConfigError
from .roi import ExpansionParams
from .training import LogitConfig, LossWeights


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    crop_size: int = 512
    theta: float = 1.2
    alpha_mil: float = 4.0
    alpha_crf: float = 0.5
    omega: float = 2.0
    zeta: float = 0.5
    kernel_form: str = "squared"
    crf_update_rule: str = "meanfield"
    crf_max_iters: int = 10
    crf_tol: float = 1e-4
    threshold: float = 0.5
    ema_momentum: float = 0.996
    learning_rate: float = 40.0
    steps: int = 500
    init_noise: float = 0.01
    include_margin_bags: bool = True
    parallelism: int = 1

    def __post_init__(self):
        if self.crop_size < 1:
            raise ConfigError(f"crop_size must be >= 1, got {self.crop_size}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ConfigError(f"ema_momentum must be in [0, 1], got {self.ema_momentum}")
        try:
            self.crf_params()
            self.loss_weights()
            self.expansion_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def crf_params(self) -> CrfParams:
        return CrfParams(
            omega=self.omega,
            zeta=self.zeta,
            max_iters=self.crf_max_iters,
            tol=self.crf_tol,
            threshold=self.threshold,
            kernel_form=self.kernel_form,
            update_rule=self.crf_update_rule,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(alpha_mil=self.alpha_mil, alpha_crf=self.alpha_crf)

    def expansion_params(self) -> ExpansionParams:
        return ExpansionParams(theta=self.theta, seed=self.seed)

    def logit_config(self) -> LogitConfig:
        return LogitConfig(
            learning_rate=self.learning_rate,
            steps=self.steps,
            init_noise=self.init_noise,
            ema_momentum=self.ema_momentum,
            include_margin_bags=self.include_margin_bags,
        )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(obj) - set(fields)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_json(obj)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
