import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/dgplan/_lloyd_cy.pyx",
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython: the package still works through the numpy fallback kernel.
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[numpy.get_include()],
)
