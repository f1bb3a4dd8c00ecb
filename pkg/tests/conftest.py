import functools
import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def fixture_session(name: str, seed: int = 1):
    """Collection run + analysis for a shipped profile, shared across tests."""
    from poibeacon.pipeline import prepare_session
    from poibeacon.sim import load_fixture

    return prepare_session(load_fixture(name), seed)
