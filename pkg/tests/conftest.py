import pytest

import fedkd.backend as backend


def available_backends():
    names = []
    try:
        import fedkd._kernels  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    names.append("numpy")
    return names


@pytest.fixture(autouse=True)
def _restore_backend():
    backend.active()
    saved = (backend._active, backend._name)
    yield
    backend._active, backend._name = saved


@pytest.fixture(params=available_backends())
def kernel_backend(request):
    """Runs the test once per buildable kernel backend."""
    backend.use(request.param)
    return request.param
