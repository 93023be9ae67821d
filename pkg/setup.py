"""Build script for the optional compiled mixture kernel.

The package is pure Python except for ``rfswarm._mixfast``, a Cython
translation of the Gaussian-mixture cost kernels.  If Cython or a C
compiler is unavailable the extension is skipped and the package falls
back to the numpy implementation at import time.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        warnings.warn(f"compiled kernel disabled ({exc}); using numpy fallback")
        return []
    from setuptools import Extension

    ext = Extension(
        "rfswarm._mixfast",
        ["src/rfswarm/_mixfast.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


class optional_build_ext(build_ext):
    """Build the extension but never fail the install over it."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"compiled kernel build failed ({exc}); "
                          "using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled kernel build failed ({exc}); "
                          "using numpy fallback")


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
