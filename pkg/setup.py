import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled conv kernels are optional: without them the package falls
# back to the numpy implementations in cyclevc.nn.kernels.pykernels.
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "cyclevc.nn.kernels._convcore",
                ["src/cyclevc/nn/kernels/_convcore.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
