from setuptools import setup, Extension

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-Python install; the package falls back to attribias.retrieval._bm25_py.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "attribias.retrieval._bm25_core",
                ["src/attribias/retrieval/_bm25_core.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
