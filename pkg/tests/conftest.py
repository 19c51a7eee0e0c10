import pytest

from fasthla import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the JIT lane once so per-test timings measure the algorithms,
    not compilation."""
    _kernels.warmup()
