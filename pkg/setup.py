import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "vrsgd.kernels._core",
        ["src/vrsgd/kernels/_core.pyx"],
        include_dirs=[numpy.get_include(), "src/vrsgd/kernels"],
        # fp-contract off: no FMA fusion, so trajectories match the pure
        # backend bit for bit
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
