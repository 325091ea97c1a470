"""Build the optional Cython kernels.

The package works without them: ``sinkdiff.kernels`` falls back to NumPy
when ``sinkdiff._ckernels`` cannot be imported. Set ``SINKDIFF_NO_EXT=1`` to
skip compilation entirely.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("SINKDIFF_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "sinkdiff._ckernels",
                    ["src/sinkdiff/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
