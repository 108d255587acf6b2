"""Build script for the optional compiled smoothing kernel.

The package works without the extension (a pure-Python kernel is selected
at import time), but the compiled kernel is what makes million-frame
series practical.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "crowdgate.kernels._fast",
                ["src/crowdgate/kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
