"""Build script: compiles the optional native update kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile must never fail the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "jtcphd.kernels._native",
                ["src/jtcphd/kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"jtcphd: skipping native kernel build ({exc!r}); "
          "pure-python kernels will be used", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
