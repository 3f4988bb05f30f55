import os

import numpy as np
from setuptools import Extension, setup

ext_kwargs = dict(
    include_dirs=[np.get_include(), "src/gammaruin/kernels"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    extra_compile_args=["-O3"],
)

if os.environ.get("GAMMARUIN_NO_EXT"):
    ext_modules = []
else:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("gammaruin.kernels._ckernels", ["src/gammaruin/kernels/_ckernels.pyx"], **ext_kwargs)],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False, "cdivision": True},
    )

setup(ext_modules=ext_modules)
