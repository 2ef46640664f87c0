"""Builds the optional Cython transport-simplex kernel.

The package works without it (a pure-Python backend is selected at import
time), so a missing compiler or Cython only costs speed, not functionality.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "hetgen._ot_simplex",
                ["src/hetgen/_ot_simplex.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
