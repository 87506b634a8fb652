"""Build hook for the optional compiled simulator engine.

The package is pure Python except for the simulator's inner event loop,
which has a Cython twin.  If Cython or a C compiler is missing the build
falls back to the pure-Python engine (selected at import time), so the
extension failing to build is never fatal.
"""

import numpy as np
from setuptools import setup, Extension
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if we can, otherwise carry on without it."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"warning: compiled simulator engine not built ({exc}); "
                  "falling back to the pure-Python engine")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: skipping {ext.name}: {exc}")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython not available; compiled engine skipped")
        return []
    ext = Extension(
        "oqnet.simulator._engine_cy",
        ["src/oqnet/simulator/_engine_cy.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={'language_level': "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
