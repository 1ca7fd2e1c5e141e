"""Build script for the optional compiled kernel core.

The package works without the extension: ``ktune.bench`` falls back to the
numpy implementation when ``ktune.bench._kernels`` cannot be imported.
"""
import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("KTUNE_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "ktune.bench._kernels",
        ["src/ktune/bench/_kernels.pyx"],
        include_dirs=[np.get_include()],
        # no auto-vectorization: UNROLL must stay a real tuning knob
        extra_compile_args=["-O2", "-fno-tree-vectorize"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"}, quiet=True)


setup(ext_modules=_extensions())
