from .assembly import (
    QuadratureConfig,
    assemble_fractional_gram,
    assemble_fractional_laplace,
    assemble_nonlocal,
    snap_delta,
)
from .kernel import (
    DELTA_INFINITY,
    KernelSpec,
    kernel_eval,
    kernel_mass,
    omega,
    scaling_constant,
    splitting_constant,
)
from .oracle import oracle_entry
