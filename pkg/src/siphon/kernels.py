"""Hot-loop kernels with backend selection at import time.

The compiled ``_ckernels`` extension is used when it was built; otherwise
the numpy versions in ``_fallback`` are used. Set ``SIPHON_BACKEND=numpy``
to force the fallback. Both backends return identical results.
"""
import os

from . import _fallback

_FUNCS = ("mix64", "hash_keys", "bloom_insert", "bloom_query",
          "lcp_bytes", "neighbor_lcp", "surf_probe")


def _load(name):
    if name == "numpy":
        return _fallback
    from . import _ckernels
    return _ckernels


def available_backends():
    out = ["numpy"]
    try:
        _load("cython")
    except ImportError:
        pass
    else:
        out.insert(0, "cython")
    return out


def get_backend(name):
    """Return the kernel module for ``name`` ("cython" or "numpy")."""
    if name not in ("cython", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    return _load(name)


_requested = os.environ.get("SIPHON_BACKEND", "").lower()
if _requested == "numpy":
    BACKEND = "numpy"
else:
    try:
        _load("cython")
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        BACKEND = "numpy"

_impl = _load(BACKEND)
mix64 = _impl.mix64
hash_keys = _impl.hash_keys
bloom_insert = _impl.bloom_insert
bloom_query = _impl.bloom_query
lcp_bytes = _impl.lcp_bytes
neighbor_lcp = _impl.neighbor_lcp
surf_probe = _impl.surf_probe

__all__ = ["BACKEND", "available_backends", "get_backend", *_FUNCS]
