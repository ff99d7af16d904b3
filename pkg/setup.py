"""Build script: compiles the optional fast kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes long runs much faster.  -ffp-contract=off
keeps the compiler from fusing multiply-adds so the compiled kernel stays
bit-identical to the fallback.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "adasa._kernels._fast",
                ["src/adasa/_kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
