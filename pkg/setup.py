"""Build script for the optional compiled top-k kernel.

The package is fully functional without the extension; a numpy fallback is
selected at import time when the compiled module is missing.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dpparse._kernels._topk",
                sources=["src/dpparse/_kernels/_topk.pyx"],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
