"""Build the optional compiled kernels.

The extension is optional: when Cython or a compiler is missing the package
installs without it and falls back to the numpy implementation at import.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("PERMLAB_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "permlab._kernels",
                    sources=["src/permlab/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no fast-math and no FMA contraction: keeps results
                    # bit-identical to the numpy fallback
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
