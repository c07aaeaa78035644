import os

from setuptools import Extension, setup

# The compiled loop is optional: without Cython (or with
# SMITHSAFE_PURE_PYTHON=1) the package installs with the Python kernel only.
ext_modules = []
if not os.environ.get("SMITHSAFE_PURE_PYTHON"):
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "smithsafe._core",
                    ["src/smithsafe/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # No FMA contraction and no sin+cos -> sincos fusion (glibc sincos can
                    # differ from sin by an ulp): the kernel must match Python bit for bit.
                    extra_compile_args=["-O2", "-ffp-contract=off", "-fno-builtin-sin", "-fno-builtin-cos"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
