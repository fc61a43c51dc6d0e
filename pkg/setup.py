"""Build script for the optional compiled scanner kernels.

The package works without the extension (a pure-Python implementation is
selected at import time), so a failed Cython build degrades to a source-only
install instead of aborting.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/kgmon/_speedups.pyx"],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
