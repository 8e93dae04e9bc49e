import pytest

from mguard import backend


@pytest.fixture(autouse=True)
def _numpy_backend():
    """Default the suite to the numpy lane; backend-specific tests switch
    explicitly and restore via this fixture's teardown."""
    backend.use("numpy")
    yield
    backend.use("numpy")
