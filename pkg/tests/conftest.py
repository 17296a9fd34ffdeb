import os

# single-threaded BLAS: stable timings on small boxes, byte-identical reruns
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest

from prefopt.data import generate_offline_dataset, generate_pref_dataset
from prefopt.envs import make_env
from prefopt.runtime import limit_blas_threads

limit_blas_threads(1)

MIX = {"expert": 0.2, "medium": 0.4, "random": 0.4}


@pytest.fixture(scope="session")
def pm_spec():
    return make_env("pointmass2d")


@pytest.fixture(scope="session")
def pend_spec():
    return make_env("pendulum")


@pytest.fixture(scope="session")
def pm_data(pm_spec):
    """Small mixed pointmass dataset shared by the fast tests."""
    dataset, manifest = generate_offline_dataset(pm_spec, MIX, 30, seed=7)
    return dataset, manifest


@pytest.fixture(scope="session")
def pm_prefs_k6(pm_data):
    dataset, _ = pm_data
    return generate_pref_dataset(dataset, 60, k=6, seed=3)


@pytest.fixture(scope="session")
def pm_prefs_k25(pm_data):
    dataset, _ = pm_data
    return generate_pref_dataset(dataset, 200, k=25, seed=5)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
