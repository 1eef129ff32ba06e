import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fall back to the pure numpy kernels
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "renewcap._kernels",
                ["src/renewcap/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O2", "-fopenmp", "-ffp-contract=off"],
                extra_link_args=["-fopenmp"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
