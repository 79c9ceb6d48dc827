"""Build script: compiles the optional iteration kernel.

The package is fully functional without the extension; anything that cannot
build it (no compiler, SASTAB_NO_KERNEL=1) silently falls back to the pure
Python engine loop.
"""

import os

from setuptools import setup

ext_modules = None
if os.environ.get("SASTAB_NO_KERNEL") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        # the C-level distribution functions live in a separate static lib
        _nprandom_lib = os.path.join(
            os.path.dirname(numpy.__file__), "random", "lib"
        )

        ext_modules = cythonize(
            [
                Extension(
                    "sastab._kernel",
                    ["src/sastab/_kernel.pyx"],
                    include_dirs=[numpy.get_include()],
                    library_dirs=[_nprandom_lib],
                    libraries=["npyrandom"],
                    # plain -O2 on purpose: no -ffast-math, no -march=native.
                    # The kernel must stay bit-identical to the pure-Python
                    # loop, so FP contraction and fast-math reassociation are
                    # off the table.
                    extra_compile_args=["-O2"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = None

setup(ext_modules=ext_modules)
