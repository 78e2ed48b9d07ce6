"""Build script for the optional compiled phase-sum kernel.

The package works without the extension; tridot._kernels falls back to a
pure-numpy implementation when the compiled module is absent.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "tridot._kernels._phase_cy",
                ["src/tridot/_kernels/_phase_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
