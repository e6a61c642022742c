"""Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI uses when it surfaces it.
Errors raised from model validators must not derive from ValueError, which
pydantic would fold into a ValidationError.
"""

EXIT_CHECK_FAILURE = 1
EXIT_CONFIG_ERROR = 2


class NlrbError(Exception):
    exit_code = EXIT_CHECK_FAILURE


class ConfigError(NlrbError, ValueError):
    exit_code = EXIT_CONFIG_ERROR


class MeshError(NlrbError):
    pass


class KernelError(NlrbError):
    pass


class ParameterRangeError(NlrbError):
    pass


class QuadratureError(NlrbError, RuntimeError):
    pass


class AssemblyError(NlrbError, RuntimeError):
    pass


class SolverError(NlrbError, RuntimeError):
    pass


# Raised when the s-interval is too wide or rho breaks the coercivity condition
class RegularizationError(NlrbError):
    exit_code = EXIT_CONFIG_ERROR


class ReducedBasisError(NlrbError, RuntimeError):
    pass


# The appended vector lies in the current span
class BasisRejection(ReducedBasisError):
    pass
