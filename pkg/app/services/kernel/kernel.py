import logging
import math
from typing import Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import integrate
from scipy.special import gammaln

from app.errors import KernelError, QuadratureError

logger = logging.getLogger(__name__)

DELTA_INFINITY = math.inf


# --- Pydantic Models ---
class KernelSpec(BaseModel):
    """Radial kernel gamma(x, x') = profile(|x - x'|) truncated at the interaction radius."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    family: Literal["fractional_truncated", "custom_radial"] = "fractional_truncated"
    s: float = 0.5
    delta: float = 1.0
    radial_profile: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @model_validator(mode="after")
    def _check(self):
        if not 0.0 < self.s < 1.0:
            raise KernelError(f"Fractional power s must lie in (0, 1), got {self.s}")
        if not self.delta > 0.0:
            raise KernelError(f"Interaction radius must be positive, got {self.delta}")
        if self.family == "custom_radial" and self.radial_profile is None:
            raise KernelError("custom_radial kernels need a radial_profile")
        return self

    def with_delta(self, delta: float) -> "KernelSpec":
        return KernelSpec(family=self.family, s=self.s, delta=delta, radial_profile=self.radial_profile)

    def with_s(self, s: float) -> "KernelSpec":
        return KernelSpec(family=self.family, s=s, delta=self.delta, radial_profile=self.radial_profile)

    def profile(self, r):
        """Untruncated radial profile evaluated at r > 0."""
        if self.family == "fractional_truncated":
            return np.power(r, -1.0 - 2.0 * self.s)
        return self.radial_profile(r)


def kernel_eval(spec: KernelSpec, r: float) -> float:
    if r < 0.0:
        raise KernelError(f"Kernel distance must be non-negative, got {r}")
    if r == 0.0:
        raise KernelError("Kernel is singular at r = 0; integrate it analytically instead")
    if r >= spec.delta:
        return 0.0
    value = float(spec.profile(r))
    if value < 0.0:
        raise KernelError(f"Kernel profile is negative at r={r}")
    return value


def omega(n: int) -> float:
    """Surface measure of the unit sphere in R^n; omega(1) = 2."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def scaling_constant(n: int, s: float) -> float:
    """c_{n,s} = 2^{2s} s Gamma(s + n/2) / (pi^{n/2} Gamma(1 - s)), evaluated in log space."""
    if n < 1:
        raise KernelError(f"Dimension must be at least 1, got {n}")
    if not 0.0 < s < 1.0:
        raise KernelError(f"Fractional power s must lie in (0, 1), got {s}")
    log_c = (
        2.0 * s * math.log(2.0)
        + math.log(s)
        + gammaln(s + n / 2.0)
        - (n / 2.0) * math.log(math.pi)
        - gammaln(1.0 - s)
    )
    return float(math.exp(log_c))


def splitting_constant(delta_p: float, n: int, s: float, diam: Optional[float] = None) -> float:
    """C(delta', n, s) = omega(n) / (delta'^{2s} s), the mass coefficient of the exterior tail."""
    if diam is not None and delta_p < diam:
        raise KernelError(f"Splitting needs delta' >= diam(Omega) = {diam}, got {delta_p}")
    if not 0.0 < s < 1.0:
        raise KernelError(f"Fractional power s must lie in (0, 1), got {s}")
    return omega(n) / (delta_p ** (2.0 * s) * s)


def kernel_mass(spec: KernelSpec, lo: float, hi: float) -> float:
    """Integral of the radial profile over [lo, hi] (n = 1 weight r^0)."""
    if hi <= lo:
        return 0.0
    if spec.family == "fractional_truncated":
        s2 = 2.0 * spec.s
        return (lo ** -s2 - hi ** -s2) / s2
    value, err = integrate.quad(spec.radial_profile, lo, hi, limit=200)
    if not np.isfinite(value):
        raise QuadratureError(f"Kernel profile is not integrable on [{lo}, {hi}]")
    return float(value)
