import numpy as np
from setuptools import setup, Extension
from Cython.Build import cythonize

# -ffp-contract=off: the numpy fallback is the reference for bit-exact
# cross-path tests; fused multiply-adds would change low-order bits.
# -march=native only widens IEEE add/mul/div to vector forms, which are
# still correctly rounded, so it cannot change results with contraction off.
ext = Extension(
    "screendx.kernels._native",
    ["src/screendx/kernels/_native.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off", "-march=native"],
)

setup(ext_modules=cythonize(ext, language_level=3))
