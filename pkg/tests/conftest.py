import numpy as np
import pytest
import yaml

from app.services.affine.delta import make_partition
from app.services.affine.s import chebyshev_nodes
from app.services.fem.mesh import build_mesh
from app.services.solver.detailed import build_delta_model, build_s_model


@pytest.fixture(scope="session")
def mesh8():
    return build_mesh(0.0, 1.0, 8)


@pytest.fixture(scope="session")
def mesh16():
    return build_mesh(0.0, 1.0, 16)


@pytest.fixture(scope="session")
def delta_model(mesh16):
    partition = make_partition(1.0 / 16.0, 1.0, 5)
    return build_delta_model(mesh16, 0.5, partition, "case2", delta_star=0.5)


@pytest.fixture(scope="session")
def s_model(mesh16):
    grid = chebyshev_nodes(1.0 / 3.0, 0.5, 4)
    return build_s_model(mesh16, 0.25, grid)


@pytest.fixture(scope="session")
def s_model_inf(mesh16):
    grid = chebyshev_nodes(1.0 / 3.0, 0.5, 4)
    return build_s_model(mesh16, np.inf, grid)


# Small study file: 2^-4 mesh, short parameter sets, one K and one M
@pytest.fixture
def study_file(tmp_path):
    def write(**sections):
        data = {
            "mesh": {"mesh_exp": 4},
            "partition": {"K": [3, 5]},
            "sgrid": {"M": [2, 4]},
            "sets": {"delta_train": 16, "s_train": 10, "delta_test": 8, "s_test": 6},
            "greedy": {"N_max": 4, "K": [5], "M": [4]},
            "output": {"dir": str(tmp_path / "out")},
        }
        for name, values in sections.items():
            data.setdefault(name, {}).update(values)
        path = tmp_path / "study.yaml"
        path.write_text(yaml.safe_dump(data))
        return path

    return write
