import sys

from setuptools import setup

# The compiled kernels are an optional speedup: the package falls back to the
# numpy implementations in hlwlab.numcore._pykernels when the extension is
# missing, so a failed compile must not block installation.
ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "hlwlab.numcore._ckernels",
                ["src/hlwlab/numcore/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover
    print(f"hlwlab: skipping compiled kernels ({exc}); numpy fallback will be used",
          file=sys.stderr)

setup(ext_modules=ext_modules)
