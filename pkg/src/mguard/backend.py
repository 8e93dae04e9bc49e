"""Kernel backend selection: numba-jitted hot loops with a pure-numpy fallback.

The active backend is chosen once at import from the MGUARD_BACKEND env var
("numba", "numpy", or "auto", the default) and can be switched at runtime
with use()/active(). Hot kernels are registered as a pair of
implementations -- a vectorized numpy one and a loop-fused numba one -- and
dispatch per call, so switching backends never requires a reimport and the
numpy path stays importable on machines without numba.
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on numba-less installs
    numba = None
    HAVE_NUMBA = False

_VALID = ("numba", "numpy")


def _initial() -> str:
    req = os.environ.get("MGUARD_BACKEND", "auto").strip().lower()
    if req == "numpy":
        return "numpy"
    if req == "numba":
        if not HAVE_NUMBA:
            raise ImportError("MGUARD_BACKEND=numba but numba is not installed")
        return "numba"
    if req not in ("auto", ""):
        raise ValueError(f"MGUARD_BACKEND must be numba, numpy or auto, got {req!r}")
    return "numba" if HAVE_NUMBA else "numpy"


_active = _initial()


def active() -> str:
    """Name of the backend kernels currently dispatch to."""
    return _active


def use(name: str) -> None:
    """Switch kernel dispatch to "numba" or "numpy" for this process."""
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ValueError("numba backend requested but numba is not installed")
    global _active
    _active = name


def pair(np_fn, loop_fn):
    """Register a hot kernel as (vectorized numpy fn, loop-form fn).

    The loop form is numba-compiled lazily (first call, disk-cached) and
    releases the GIL so thread pools can run kernels concurrently. Without
    numba every call falls back to the numpy form.
    """
    jitted = numba.njit(cache=True, nogil=True)(loop_fn) if HAVE_NUMBA else None

    def dispatch(*args):
        if _active == "numba":
            return jitted(*args)
        return np_fn(*args)

    dispatch.np_func = np_fn
    dispatch.jit_func = jitted
    dispatch.__name__ = np_fn.__name__.removesuffix("_np")
    return dispatch
