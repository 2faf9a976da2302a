"""Pick the compiled kernels when available, else the pure-Python twins.

Set ``OLINEAR_PURE_PYTHON=1`` to force the fallback.
"""
import os

BACKEND = "python"

if os.environ.get("OLINEAR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from olinear._kernels import jacobi_eigh  # noqa: F401
        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from olinear._fallback import jacobi_eigh  # noqa: F401,F811
