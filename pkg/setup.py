from setuptools import setup

# The compiled scan kernel is optional: the package falls back to the numpy
# implementation when the extension is absent or fails to build.
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "avsqueeze.kernels._scan_cy",
                ["src/avsqueeze/kernels/_scan_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
