"""Build script for the compiled Gram-matrix core.

The extension is optional: if Cython or a C compiler is unavailable the
package installs pure-Python and `causalstates.kernels` falls back to the
numpy backend at import time.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "causalstates._gramcore",
                ["src/causalstates/_gramcore.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
