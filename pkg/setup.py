"""Build script.

Compiles the optional path-simulation kernels (popmdp._kernels) when Cython
and a C compiler are available; the package falls back to the pure-NumPy
kernels otherwise.  Set POPMDP_NO_EXT=1 to skip the extension entirely.

    python setup.py build_ext --inplace
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("POPMDP_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "popmdp._kernels",
                    ["src/popmdp/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    # -ffp-contract=off keeps multiply/add separate so the
                    # compiled kernels are bit-identical to the NumPy fallback
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
