"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise (or when
``CORPUSPREP_PURE=1`` is set) the numpy fallback is loaded.
"""
import hashlib
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CORPUSPREP_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

minhash_batch = _impl.minhash_batch
bpe_merge = _impl.bpe_merge
mulmod61 = _impl.mulmod61


def hash64(text: str) -> int:
    """Stable 64-bit hash of a string (blake2b, little-endian)."""
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")
