"""Builds the compiled closed-loop kernel.

The package works without the extension (a pure-Python loop is selected at
import time), but the compiled kernel is what makes large sweeps and the
small-sampling-period verification runs fast.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "zohfunnel._kernel._core",
        ["src/zohfunnel/_kernel/_core.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
