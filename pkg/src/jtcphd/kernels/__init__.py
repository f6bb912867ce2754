"""Hot-path kernels with a compiled core and a pure-numpy fallback.

The compiled extension (built from ``_native.pyx``) is preferred when it
imports cleanly; otherwise the numpy reference implementation is used.
Set ``JTCPHD_PURE_PYTHON=1`` to force the fallback, e.g. for benchmarking
or when debugging the kernels themselves.
"""

from __future__ import annotations

import os

from . import _reference

_IMPL = _reference
_BACKEND = "reference"

if os.environ.get("JTCPHD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _native  # type: ignore[attr-defined]

        _IMPL = _native
        _BACKEND = "native"
    except ImportError:
        pass


def backend_name() -> str:
    """Name of the active kernel backend: ``native`` or ``reference``."""
    return _BACKEND


def innovation_batch(covs, hs, r):
    return _IMPL.innovation_batch(covs, hs, r)


def loglik_batch(z, zbars, s_invs, logdets, oks, periods):
    return _IMPL.loglik_batch(z, zbars, s_invs, logdets, oks, periods)
