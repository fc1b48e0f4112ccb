import os

from setuptools import setup

# The compiled kernel is optional: the package selects a pure-numpy
# fallback at import time when evanskit._core is absent (or when
# EVANSKIT_DISABLE_EXT is set).  Build it only when the source and the
# Cython toolchain are available.
ext_modules = []
if os.path.exists(os.path.join("src", "evanskit", "_core.pyx")):
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "evanskit._core",
                sources=["src/evanskit/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API",
                                "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
