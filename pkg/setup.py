import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "affnet._kernels",
        ["src/affnet/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-fcx-limited-range"],
    )
]

# AFF_NO_EXT=1 builds a pure-Python install that runs on the numpy fallback.
setup(
    ext_modules=[] if os.environ.get("AFF_NO_EXT") else cythonize(
        extensions, compiler_directives={"language_level": "3"}
    )
)
