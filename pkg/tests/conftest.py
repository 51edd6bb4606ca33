"""Shared fixtures: one master seed fixes every stochastic test in the suite."""

import pytest

MASTER_SEED = 20260810


@pytest.fixture(scope="session")
def master_seed() -> int:
    return MASTER_SEED


def rng_for(*tag):
    from latticeepi.rng import keyed_generator
    return keyed_generator(MASTER_SEED, "test", *tag)


def assert_within_se(observed: float, expected: float, se: float, n_se: float, label: str = ""):
    se = max(se, 1e-300)
    z = abs(observed - expected) / se
    assert z <= n_se, (f"{label}: observed {observed}, expected {expected}, "
                       f"|z| = {z:.2f} > {n_se}")
