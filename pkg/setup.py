"""Build script for the optional compiled kernel core.

The package works without the extension (a numpy fallback is selected at
import time), so a failed Cython build should not block installation.
"""

from setuptools import Extension, find_packages, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "exact_alloc.kernels._core",
                ["src/exact_alloc/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

# package_dir/packages repeat the pyproject src layout so that legacy
# `setup.py build_ext --inplace` style builds resolve paths correctly
setup(
    name="exact-alloc",
    package_dir={"": "src"},
    packages=find_packages("src"),
    ext_modules=ext_modules,
)
