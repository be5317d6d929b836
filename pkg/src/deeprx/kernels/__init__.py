"""Hot loops, compiled when the extension is built and NumPy otherwise.

Set ``DEEPRX_PURE_PYTHON=1`` to force the NumPy path.
"""

import os

from . import _viterbi_py

try:
    if os.environ.get("DEEPRX_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _viterbi_ext as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _viterbi_py
    BACKEND = "python"

viterbi_path = _impl.viterbi_path
viterbi_path_py = _viterbi_py.viterbi_path
transition_tables = _viterbi_py.transition_tables

__all__ = ["BACKEND", "viterbi_path", "viterbi_path_py", "transition_tables"]
