"""Build script: compiles the optional fast kernel extension when possible.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so any compiler or Cython failure downgrades to a
pure-Python install instead of aborting.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    # -O3 but never -ffast-math: the Kahan compensation must survive
    ext = Extension(
        "rrfsim._core",
        sources=["src/rrfsim/_core.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )


class optional_build_ext(build_ext):
    """build_ext that warns instead of failing when compilation breaks."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain, ...
            print(f"warning: skipping compiled kernels ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(
                f"warning: could not build {ext.name}, the numpy fallback "
                f"will be used ({exc})",
                file=sys.stderr,
            )


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})
