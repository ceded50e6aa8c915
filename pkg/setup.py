"""Build script: compiles the native gather/scatter kernels when Cython and a
C compiler are available. Without them the package still installs and falls
back to the pure-NumPy kernels at import time."""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "ctgen.kernels._native",
                ["src/ctgen/kernels/_native.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
