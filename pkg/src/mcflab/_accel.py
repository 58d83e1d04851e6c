"""Backend selection for the hot kernels.

Every kernel in :mod:`mcflab.kernels` exists twice: a numba ``@njit`` loop
version and a vectorised numpy version.  The numba path is used when numba
imports and ``MCFLAB_DISABLE_NUMBA`` is unset (or ``0``).  Tests and the
benchmark flip between them with :func:`set_backend`.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("MCFLAB_DISABLE_NUMBA", "").strip().lower()
_use_numba = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is present, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(fn):
        if numba is None:
            return fn
        return numba.njit(**kwargs)(fn)

    if args and callable(args[0]):
        return wrap(args[0])
    return wrap


def use_numba() -> bool:
    return _use_numba


def backend() -> str:
    return "numba" if _use_numba else "numpy"


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend name."""
    global _use_numba
    prev = backend()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not importable")
    _use_numba = name == "numba"
    return prev


def set_threads(n: int) -> None:
    if numba is not None and n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
