"""Builds the optional compiled kernel extension.

The package works without it: gamesync.kernels falls back to the pure-Python
twin when the extension is missing or Cython is unavailable at build time.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "gamesync._kernels",
                ["src/gamesync/_kernels.pyx"],
                # -ffp-contract=off: no fused multiply-add, results must be
                # bit-identical to the pure-Python backend.
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
