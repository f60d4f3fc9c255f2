import os

from setuptools import setup

ext_modules = []
if not os.environ.get("TYPICAL_TABLES_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "typical_tables._kernels",
                    ["src/typical_tables/_kernels.pyx"],
                    language="c++",
                    extra_compile_args=["-O3"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
