from .assembly import assemble_h1_gram, assemble_load, assemble_mass
from .linalg import cholesky, freeze, norm, solve_spd
from .mesh import DofMap, Mesh1D, build_mesh, interpolate, prolong
