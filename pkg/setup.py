"""Build script: compiles the explicit-march kernel when Cython and a C compiler
are available; the package falls back to a pure scipy kernel otherwise."""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension
    import numpy

    ext_modules = cythonize(
        [
            Extension(
                "uqlift._march_cy",
                ["src/uqlift/_march_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
