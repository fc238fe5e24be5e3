"""Build the optional compiled Jacobi core.

If Cython or a C compiler is unavailable the package still installs and
falls back to the numpy implementation at import time.
"""
import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: compiled core not built ({exc}); using numpy fallback", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback", file=sys.stderr)


def extensions():
    if os.environ.get("GRADSUB_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    args = ["-O3", "-fopenmp-simd"]
    if os.environ.get("GRADSUB_PORTABLE") is None:
        args += ["-march=native", "-mprefer-vector-width=512"]
    ext = Extension(
        "gradsub._jacobi",
        ["src/gradsub/_jacobi.pyx"],
        include_dirs=["src/gradsub", np.get_include()],
        extra_compile_args=args,
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
