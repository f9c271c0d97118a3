"""
Shared fixtures: small grids, default parameters and one cached mountain-pass run
"""
import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from qsp_lab.config import RunConfig, parse_config  # noqa: E402
from qsp_lab.model import ModelParams  # noqa: E402
from qsp_lab.mountain_pass import MountainPassSolver  # noqa: E402
from qsp_lab.radial_grid import build_uniform  # noqa: E402

MP_R = 12.0
MP_N = 500


@pytest.fixture
def grid():
    return build_uniform(10.0, 400)


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def gaussian(grid):
    return grid.sample(lambda r: np.exp(-0.5 * r * r))


@pytest.fixture(scope="session")
def mp_grid():
    return build_uniform(MP_R, MP_N)


@pytest.fixture(scope="session")
def critical_point(mp_grid):
    """Mountain-pass solution at the default parameters, shared by the slow tests"""
    return MountainPassSolver(mp_grid, ModelParams()).run()


@pytest.fixture
def make_config(tmp_path):
    """Factory for configs on a coarse grid writing under tmp_path"""

    def build(out: str = "out", **sections) -> RunConfig:
        data = {"grid": {"R": MP_R, "N": 300}, "output": {"out_dir": str(tmp_path / out)}}
        for name, values in sections.items():
            data.setdefault(name, {}).update(values)
        return parse_config(data)

    return build
