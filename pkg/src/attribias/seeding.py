"""Labeled seed derivation: every stage draws from ``derive_seed(root, label...)``."""
import hashlib


def derive_seed(root: int, *labels) -> int:
    h = hashlib.sha256(str(int(root)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")
