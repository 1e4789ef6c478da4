"""Experiment configuration: one versioned JSON document per run."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..denoiser import DenoiseConfig
from ..errors import InvalidParameterError
from ..objects import (
    BinaryTextureParams,
    MvnLumpyParams,
    NoiseSpec,
    SignalSpec,
    background_from_dict,
)

CONFIG_VERSION = 1

TASKS = ("mvn_lumpy", "binary_texture")


@dataclass(frozen=True)
class SolverSettings:
    tv_epsilon: float = 1e-6
    iterations: int = 3000
    step_size: float = 1e-4
    moment_decay_1: float = 0.9
    moment_decay_2: float = 0.999
    moment_epsilon: float = 1e-8
    init: str = "noisy_input"


@dataclass
class ExperimentConfig:
    task: str
    background: MvnLumpyParams | BinaryTextureParams
    signal: SignalSpec
    noise: NoiseSpec
    n_train_absent: int = 2000
    n_train_present: int = 2000
    n_test_absent: int = 400
    n_test_present: int = 400
    shrinkage: float = 1e-3
    alphas: list[float] = field(default_factory=lambda: [1.0])
    betas: list[float] = field(default_factory=lambda: [0.05])
    gammas: list[float] = field(default_factory=lambda: [0.0, 0.1, 0.5, 1.0])
    solver: SolverSettings = field(default_factory=SolverSettings)
    master_seed: int = 0
    output_dir: str = "runs/experiment"
    render_item: int | None = None  # None: first signal-present test item
    render_beta: float | None = None  # None: first beta of the grid
    batch_size: int = 16

    def __post_init__(self):
        if self.task not in TASKS:
            raise InvalidParameterError(f"unknown task {self.task!r}; expected one of {TASKS}")
        for name in ("alphas", "betas", "gammas"):
            values = getattr(self, name)
            if not values:
                raise InvalidParameterError(f"{name} must be non-empty")
            setattr(self, name, [float(v) for v in values])
        for name in ("n_train_absent", "n_train_present", "n_test_absent", "n_test_present"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be >= 1")
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")

    def denoise_config(self, alpha: float, beta: float, gamma: float) -> DenoiseConfig:
        return DenoiseConfig(alpha=alpha, beta=beta, gamma=gamma, **dataclasses.asdict(self.solver))

    @property
    def grid(self) -> list[tuple[float, float, float]]:
        return [(a, b, g) for a in self.alphas for b in self.betas for g in self.gammas]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["background"] = {"model": self.background.kind, **d["background"]}
        d["format_version"] = CONFIG_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("format_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise InvalidParameterError(f"unsupported config format_version {version}")
        task = d["task"]
        base = default_config(task)
        bg = dict(d.pop("background", {}))
        bg.setdefault("model", task)
        merged = {**dataclasses.asdict(base.background), **bg}
        merged["model"] = bg["model"]
        d["background"] = background_from_dict(merged)
        d["signal"] = SignalSpec(**{**dataclasses.asdict(base.signal), **d.get("signal", {})})
        d["noise"] = NoiseSpec(**{**dataclasses.asdict(base.noise), **d.get("noise", {})})
        d["solver"] = SolverSettings(**{**dataclasses.asdict(base.solver), **d.get("solver", {})})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        for f in dataclasses.fields(cls):
            if f.name not in d and f.name in ("alphas", "betas", "gammas"):
                d[f.name] = getattr(base, f.name)
        return cls(**d)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def default_config(task: str, **overrides) -> ExperimentConfig:
    """Desk-scale defaults for either task (32x32 grids, 3,000 iterations)."""
    if task == "mvn_lumpy":
        cfg = ExperimentConfig(
            task=task,
            background=MvnLumpyParams(width=32, height=32, dc_offset=0.1, kernel_std=6.0, field_std=0.03),
            signal=SignalSpec("gaussian", None, 5.0, 0.02),
            noise=NoiseSpec(0.01),
            betas=[0.05],
            gammas=[0.0, 0.1, 0.5, 1.0],
            output_dir="runs/mvn_lumpy",
        )
    elif task == "binary_texture":
        cfg = ExperimentConfig(
            task=task,
            background=BinaryTextureParams(width=32, height=32, spectral_exponent=2.0),
            signal=SignalSpec("disk", None, 2.0, 0.07),
            noise=NoiseSpec(0.1),
            betas=[0.01, 0.14, 1.0],
            gammas=[0.0, 0.1, 1.0, 10.0],
            render_beta=0.14,
            output_dir="runs/binary_texture",
        )
    else:
        raise InvalidParameterError(f"unknown task {task!r}")
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def full_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """The full-size 64x64 / 190,000+190,000 / 2,000+2,000 / 10,000 setting."""
    bg = dataclasses.replace(cfg.background, width=64, height=64)
    return dataclasses.replace(
        cfg,
        background=bg,
        n_train_absent=190_000,
        n_train_present=190_000,
        n_test_absent=2000,
        n_test_present=2000,
        solver=dataclasses.replace(cfg.solver, iterations=10_000),
    )


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    """The run directory, re-rooted under ``$TASKPLS_OUTPUT_ROOT`` when set."""
    import os

    root = os.environ.get("TASKPLS_OUTPUT_ROOT")
    out = Path(cfg.output_dir)
    if root:
        return Path(root) / out.name
    return out
