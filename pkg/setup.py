"""Build the optional Cython core; the package falls back to numpy when it is absent."""
from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # no Cython/numpy at build time: pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "pdvoice._ckernels",
                ["src/pdvoice/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
