import os
from pathlib import Path

import numpy as np
import pytest

from nsgalerkin.galerkin import assemble_trilinear
from nsgalerkin.grid import build_grid
from nsgalerkin.stokes_basis import CACHE_ENV, cached_eigenbasis


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """Eigenbasis cache shared by the whole session (``$NSGALERKIN_CACHE`` if set)."""
    root = os.environ.get(CACHE_ENV)
    if root:
        return Path(root)
    return tmp_path_factory.mktemp("basis-cache")


@pytest.fixture(scope="session", autouse=True)
def _cache_env(cache_dir):
    old = os.environ.get(CACHE_ENV)
    os.environ[CACHE_ENV] = str(cache_dir)
    yield
    if old is None:
        os.environ.pop(CACHE_ENV, None)
    else:
        os.environ[CACHE_ENV] = old


@pytest.fixture(scope="session")
def get_basis(cache_dir):
    def get(n, nu, k):
        return cached_eigenbasis(n, nu, k, cache_dir=cache_dir)

    return get


@pytest.fixture(scope="session")
def basis16(get_basis):
    return get_basis(16, 1.0, 8)


@pytest.fixture(scope="session")
def basis32(get_basis):
    """The standard regression basis: n=32, k=32, nu=0.05."""
    return get_basis(32, 0.05, 32)


@pytest.fixture(scope="session")
def tensor32(basis32):
    return assemble_trilinear(basis32)


@pytest.fixture(scope="session")
def tensor16(basis16):
    return assemble_trilinear(basis16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16)
