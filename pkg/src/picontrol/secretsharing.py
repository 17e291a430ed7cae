"""Threshold secret sharing for backup dispersal.

Byte-wise polynomial scheme over GF(256) with the field polynomial
x^8 + x^4 + x^3 + x + 1 (0x11b). For every secret byte a random polynomial
of degree k-1 is drawn with the secret byte as constant term and evaluated
at x = share index, so any k shares reconstruct the byte by Lagrange
interpolation at x = 0 and any k-1 shares are consistent with every
possible secret.

A sha256 digest of the secret travels with each share because
interpolation over a mismatched share set happily produces garbage.

Share file layout (bit-exact across implementations): magic "PISH1",
then k, n and the share index as unsigned 16-bit little-endian integers,
then the raw 32-byte digest, then the body. The body always has the same
length as the secret.
"""

from __future__ import annotations

import hashlib
import os
import random
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    InsufficientShares,
    IntegrityFailure,
    InvalidThreshold,
    MalformedShare,
    ShareSetMismatch,
)

FIELD_POLYNOMIAL = 0x11B
MAX_SHARES = 255

_MAGIC = b"PISH1"
_HEADER = struct.Struct("<5sHHH32s")


def gf_mul(a: int, b: int) -> int:
    """Carry-less peasant multiplication reduced by the field polynomial.

    Reference implementation; the table-based path below is checked
    against it exhaustively in the tests.
    """
    result = 0
    while b:
        if b & 1:
            result ^= a
        a <<= 1
        if a & 0x100:
            a ^= FIELD_POLYNOMIAL
        b >>= 1
    return result


def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    # 3 generates the multiplicative group of this field
    exp = np.zeros(510, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int32)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x = gf_mul(x, 3)
    exp[255:510] = exp[0:255]
    return exp, log


_EXP, _LOG = _build_tables()


def gf_mul_table(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return int(_EXP[int(_LOG[a]) + int(_LOG[b])])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(_EXP[255 - int(_LOG[a])])


def _mul_scalar_vec(c: int, arr: np.ndarray) -> np.ndarray:
    """c * arr element-wise in GF(256); arr is uint8."""
    if c == 0:
        return np.zeros_like(arr)
    out = _EXP[int(_LOG[c]) + _LOG[arr]].astype(np.uint8)
    out[arr == 0] = 0
    return out


@dataclass(frozen=True)
class Share:
    index: int
    body: bytes
    threshold_k: int
    total_n: int
    payload_digest: str  # sha256 hex of the original secret


def _check_parameters(k: int, n: int, secret: bytes) -> None:
    for value in (k, n):
        if not isinstance(value, int) or isinstance(value, bool):
            raise InvalidThreshold("k and n must be integers")
    if not (1 <= k <= n <= MAX_SHARES):
        raise InvalidThreshold(f"need 1 <= k <= n <= {MAX_SHARES}, got k={k}, n={n}")
    if not secret:
        raise InvalidThreshold("cannot split an empty secret")


def split(secret: bytes, k: int, n: int, rng: random.Random | None = None) -> list[Share]:
    """Split secret into n shares, any k of which reconstruct it.

    rng is a seedable source for the polynomial coefficients; pass None to
    draw from the system entropy source (the right choice in production).
    """
    _check_parameters(k, n, secret)
    secret_arr = np.frombuffer(secret, dtype=np.uint8)
    m = len(secret)

    def random_row() -> np.ndarray:
        if rng is None:
            raw = os.urandom(m)
        else:
            raw = rng.randbytes(m)
        return np.frombuffer(raw, dtype=np.uint8)

    # coefficients[j] holds the degree-j coefficient for every byte position
    coefficients = [secret_arr] + [random_row() for _ in range(k - 1)]
    digest = hashlib.sha256(secret).hexdigest()

    shares = []
    for index in range(1, n + 1):
        acc = coefficients[-1].copy()
        for j in range(k - 2, -1, -1):
            acc = _mul_scalar_vec(index, acc) ^ coefficients[j]
        shares.append(
            Share(
                index=index,
                body=acc.astype(np.uint8).tobytes(),
                threshold_k=k,
                total_n=n,
                payload_digest=digest,
            )
        )
    return shares


def _check_share_set(shares: Sequence[Share]) -> None:
    first = shares[0]
    for s in shares[1:]:
        if (
            s.threshold_k != first.threshold_k
            or s.total_n != first.total_n
            or s.payload_digest != first.payload_digest
            or len(s.body) != len(first.body)
        ):
            raise ShareSetMismatch("shares do not come from one split operation")
    indices = [s.index for s in shares]
    if len(set(indices)) != len(indices):
        raise ShareSetMismatch(f"duplicate share indices: {sorted(indices)}")
    for i in indices:
        if not (1 <= i <= MAX_SHARES):
            raise ShareSetMismatch(f"share index out of range: {i}")


def reconstruct(shares: Sequence[Share]) -> bytes:
    """Lagrange interpolation at x = 0 per byte position.

    Needs at least k shares of one set; the result is digest-checked
    against the payload digest carried by the shares.
    """
    if not shares:
        raise InsufficientShares("no shares supplied")
    _check_share_set(shares)
    k = shares[0].threshold_k
    if len(shares) < k:
        raise InsufficientShares(f"got {len(shares)} shares, threshold is {k}")

    chosen = sorted(shares, key=lambda s: s.index)[:k]
    xs = [s.index for s in chosen]
    secret = np.zeros(len(chosen[0].body), dtype=np.uint8)
    for j, share in enumerate(chosen):
        weight = 1
        for m, x_m in enumerate(xs):
            if m == j:
                continue
            weight = gf_mul_table(weight, gf_mul_table(x_m, gf_inv(x_m ^ xs[j])))
        body = np.frombuffer(share.body, dtype=np.uint8)
        secret ^= _mul_scalar_vec(weight, body)

    result = secret.tobytes()
    if hashlib.sha256(result).hexdigest() != chosen[0].payload_digest:
        raise IntegrityFailure("reconstructed payload does not match the share set digest")
    return result


def encode_share(share: Share) -> bytes:
    header = _HEADER.pack(
        _MAGIC,
        share.threshold_k,
        share.total_n,
        share.index,
        bytes.fromhex(share.payload_digest),
    )
    return header + share.body


def decode_share(data: bytes) -> Share:
    if len(data) < _HEADER.size:
        raise MalformedShare("share file shorter than its header")
    magic, k, n, index, digest = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise MalformedShare(f"bad magic {magic!r}")
    return Share(
        index=index,
        body=data[_HEADER.size:],
        threshold_k=k,
        total_n=n,
        payload_digest=digest.hex(),
    )
