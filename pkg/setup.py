from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fedkd._kernels",
                ["src/fedkd/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython/numpy at build time: install pure-Python; the package falls
    # back to the numpy kernels at import.
    pass

setup(ext_modules=ext_modules)
