import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

compiler_directives = {
    "language_level": "3",
    "boundscheck": False,
    "wraparound": False,
    "cdivision": True,
    "initializedcheck": False,
}

ext_modules = [
    Extension(
        "malmit._kernel",
        ["src/malmit/_kernel.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(ext_modules, compiler_directives=compiler_directives))
