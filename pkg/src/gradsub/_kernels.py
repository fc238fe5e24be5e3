"""Select the Jacobi sweep kernel at import time.

The compiled Cython core is used when it was built; otherwise (or when
``GRADSUB_PURE_PYTHON`` is set to a non-empty value) the numpy fallback is.
"""

import os

from . import _jacobi_py

python_sweeps = _jacobi_py.jacobi_sweeps

try:
    from ._jacobi import jacobi_sweeps as compiled_sweeps
except ImportError:
    compiled_sweeps = None

if compiled_sweeps is not None and not os.environ.get("GRADSUB_PURE_PYTHON"):
    jacobi_sweeps = compiled_sweeps
    BACKEND = "compiled"
else:
    jacobi_sweeps = python_sweeps
    BACKEND = "python"
