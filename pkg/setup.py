"""Builds the optional Cython kernel.

If Cython (or a C compiler) is unavailable the install still succeeds and
the package falls back to the pure-numpy kernels at import time.
"""
from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "seqrisk.kernels._lstm_cy",
                ["src/seqrisk/kernels/_lstm_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
