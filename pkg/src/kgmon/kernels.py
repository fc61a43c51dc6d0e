"""Import-time selection of the scanner kernels.

Prefers the compiled extension when it built; falls back to the pure
module otherwise. Set KGMON_PURE_PYTHON to any non-empty value to force
the fallback (the benchmark and the equivalence test rely on this).
"""

import os

from kgmon import _scan_py

if os.environ.get("KGMON_PURE_PYTHON"):
    _impl = _scan_py
else:
    try:
        from kgmon import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _scan_py

tokenize = _impl.tokenize
find_matches = _impl.find_matches
implementation: str = (
    "compiled" if _impl.__name__.endswith("_speedups") else "pure"
)

__all__ = ["tokenize", "find_matches", "implementation"]
