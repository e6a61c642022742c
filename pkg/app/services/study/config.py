"""Study configuration: one YAML file, every field defaulted to the desk-scale experiment."""
import logging
import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.errors import ConfigError
from app.services.fem.mesh import Mesh1D, build_mesh
from app.settings import get_settings

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MeshSection(_Section):
    a: float = 0.0
    b: float = 1.0
    mesh_exp: Optional[int] = None  # n_el = 2^mesh_exp; falls back to NLRB_MESH_EXP

    @model_validator(mode="after")
    def _check(self):
        if not self.a < self.b:
            raise ValueError(f"mesh.a={self.a} must be smaller than mesh.b={self.b}")
        if self.mesh_exp is not None and not 2 <= self.mesh_exp <= 12:
            raise ValueError(f"mesh.mesh_exp must lie in [2, 12], got {self.mesh_exp}")
        return self


class KernelSection(_Section):
    family: Literal["fractional_truncated"] = "fractional_truncated"
    s: float = 0.5
    delta_min: float = 1.0 / 16.0
    delta_max: float = 1.0
    delta_star: float = 0.5
    delta_p: Optional[float] = None  # splitting radius for delta = inf, defaults to diam
    s_min: float = 1.0 / 3.0
    s_max: float = 0.5
    delta_s: float = 0.25  # fixed radius of the s studies; .inf for the fractional Laplacian

    @model_validator(mode="after")
    def _check(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"kernel.s must lie in (0, 1), got {self.s}")
        if not 0.0 < self.s_min < self.s_max < 1.0:
            raise ValueError(f"Need 0 < s_min < s_max < 1, got [{self.s_min}, {self.s_max}]")
        if not 0.0 < self.delta_min < self.delta_max:
            raise ValueError(f"Need 0 < delta_min < delta_max, got [{self.delta_min}, {self.delta_max}]")
        if not self.delta_star > 0.0 or not self.delta_s > 0.0:
            raise ValueError("kernel.delta_star and kernel.delta_s must be positive")
        return self


class PartitionSection(_Section):
    K: list[int] = [5, 9, 16, 31, 61]
    rb_case: Literal["case1", "case2"] = "case2"
    rb_kind: Literal["uniform", "graded"] = "uniform"
    rate_from: float = 0.5  # rates are fitted on the errors at delta >= rate_from

    @model_validator(mode="after")
    def _check(self):
        if not self.K or min(self.K) < 1:
            raise ValueError(f"partition.K must be a nonempty list of positive integers, got {self.K}")
        if not self.rate_from > 0.0:
            raise ValueError(f"partition.rate_from must be positive, got {self.rate_from}")
        return self


class SGridSection(_Section):
    M: list[int] = [2, 4, 8, 16]

    @model_validator(mode="after")
    def _check(self):
        if not self.M or min(self.M) < 0:
            raise ValueError(f"sgrid.M must be a nonempty list of non-negative integers, got {self.M}")
        return self


class RegularizationSection(_Section):
    eps: float = 0.0
    rho_rule: Literal["numerics", "corollary", "fixed"] = "numerics"
    rho: Optional[float] = None
    eta: Literal["eta_free", "discrete"] = "eta_free"

    @model_validator(mode="after")
    def _check(self):
        if self.rho_rule == "fixed" and self.rho is None:
            raise ValueError("regularization.rho is required with rho_rule 'fixed'")
        return self


class SetsSection(_Section):
    delta_train: int = 121
    s_train: int = 50
    delta_test: int = 100
    s_test: int = 30
    seed: int = Field(default=20190101, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check(self):
        if min(self.delta_train, self.s_train, self.delta_test, self.s_test) < 1:
            raise ValueError("Training and test sets need at least one point")
        return self


class GreedySection(_Section):
    N_max: int = Field(default=20, ge=1)
    tol: float = Field(default=1e-10, gt=0.0)
    criterion: Literal["true_error", "estimator"] = "true_error"
    stop_at_floor: bool = True  # stop once the training error is below the affine floor
    K: list[int] = [5, 9, 16]
    M: list[int] = [2, 4, 8]


class LoadSection(_Section):
    kind: Literal["constant", "indicator"] = "constant"
    value: float = -1.0
    interval: tuple[float, float] = (0.5, 1.0)


class SnapshotsSection(_Section):
    deltas: list[float] = [1.0 / 16.0, 0.25, 1.0]
    s_values: list[float] = [0.1, 0.3, 0.5, 0.7, 0.9]
    load: LoadSection = LoadSection(kind="indicator", value=1.0, interval=(0.5, 1.0))


class OutputSection(_Section):
    dir: Optional[Path] = None  # falls back to NLRB_OUT_DIR
    matrices: Literal["none", "binary", "text"] = "none"


class StudyConfig(_Section):
    mesh: MeshSection = MeshSection()
    kernel: KernelSection = KernelSection()
    partition: PartitionSection = PartitionSection()
    sgrid: SGridSection = SGridSection()
    regularization: RegularizationSection = RegularizationSection()
    sets: SetsSection = SetsSection()
    greedy: GreedySection = GreedySection()
    load: LoadSection = LoadSection()
    snapshots: SnapshotsSection = SnapshotsSection()
    output: OutputSection = OutputSection()

    @property
    def mesh_exp(self) -> int:
        return self.mesh.mesh_exp if self.mesh.mesh_exp is not None else get_settings().mesh_exp

    def build_mesh(self) -> Mesh1D:
        exp = self.mesh_exp
        if exp >= get_settings().large_mesh_exp:
            logger.warning("Mesh 2^-%d requested: expect long assembly and study times", exp)
        return build_mesh(self.mesh.a, self.mesh.b, 2**exp)

    @property
    def out_dir(self) -> Path:
        return self.output.dir if self.output.dir is not None else get_settings().out_dir

    def delta_training_set(self) -> np.ndarray:
        k = self.kernel
        return np.linspace(k.delta_min, k.delta_max, self.sets.delta_train)

    def s_training_set(self) -> np.ndarray:
        k = self.kernel
        return np.linspace(k.s_min, k.s_max, self.sets.s_train)

    def delta_test_set(self) -> np.ndarray:
        rng = np.random.default_rng(self.sets.seed)
        return np.sort(rng.uniform(self.kernel.delta_min, self.kernel.delta_max, self.sets.delta_test))

    def s_test_set(self) -> np.ndarray:
        # separate stream so the two sets do not depend on each other's size
        rng = np.random.default_rng([self.sets.seed, 1])
        return np.sort(rng.uniform(self.kernel.s_min, self.kernel.s_max, self.sets.s_test))


def load_function(section: LoadSection):
    """F as a vectorized callable plus its jump points."""
    if section.kind == "constant":
        value = section.value
        return (lambda x: np.full_like(x, value, dtype=float)), ()
    lo, hi = section.interval
    value = section.value
    return (lambda x: np.where((x >= lo) & (x <= hi), value, 0.0)), (lo, hi)


def _format_errors(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors())


def load_config(path: Optional[Path]) -> StudyConfig:
    """Read a YAML study file; a missing path gives the defaults."""
    if path is None:
        return StudyConfig()
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config {path} is not valid YAML: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"Config {path} must be a mapping at the top level")
    try:
        return StudyConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {_format_errors(e)}") from e


def apply_overrides(
    config: StudyConfig,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    mesh_exp: Optional[int] = None,
) -> StudyConfig:
    """Fold CLI flags into the configuration, revalidating the result."""
    data = config.model_dump()
    if out is not None:
        data["output"]["dir"] = out
    if seed is not None:
        data["sets"]["seed"] = seed
    if mesh_exp is not None:
        data["mesh"]["mesh_exp"] = mesh_exp
    try:
        return StudyConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid override: {_format_errors(e)}") from e


def echo(config: StudyConfig) -> dict:
    """JSON-ready dump with the resolved mesh and output directory."""
    data = config.model_dump(mode="json")
    data["mesh"]["mesh_exp"] = config.mesh_exp
    data["output"]["dir"] = str(config.out_dir)
    data["kernel"]["delta_s"] = "inf" if math.isinf(config.kernel.delta_s) else config.kernel.delta_s
    return data
