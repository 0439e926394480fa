"""Build the optional compiled path-enumeration kernel.

The package works without it; ``gstab.kernels`` falls back to pure Python.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("GSTAB_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("gstab._pathenum", ["src/gstab/_pathenum.pyx"], extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )

setup(ext_modules=ext_modules)
