"""Builds the optional compiled kernel extension.

The package works without it: ``msprog._kernels`` falls back to the numpy
implementation when the extension is absent (or when MSPROG_KERNELS=slow).
"""

from setuptools import setup, Extension

try:
    from Cython.Build import cythonize
    import numpy as np

    ext_modules = cythonize(
        [
            Extension(
                "msprog._kernels._fast",
                ["src/msprog/_kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
