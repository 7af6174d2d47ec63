"""
Little-endian binary formats for keys, ciphertexts and cache entries.

Every object starts with a 4-byte magic, a version byte and the ring header
(N u64, q u64, Delta f64):

* NMCT ciphertext   -- scale f64, depth u8, then c0 and c1 as N u64 each
(evaluation domain).
* NMPK public key   -- pk0 and pk1 as N u64 each (evaluation domain).
* NMSK secret key   -- s as N u64 (coefficient domain).
* NMCE cache entry  -- base_size u64, N/2 base slots f64, then an embedded
NMCT of the base ciphertext. The base plaintext is re-encoded on load.
"""
from __future__ import annotations
import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .cache import CacheEntry, tile_base
from .ckks import Ciphertext, PublicKey, SecretKey
from .encoding import encode_vandermonde, vandermonde_for
from .errors import FormatError, HeCacheError, OutputError, ParamsMismatchError
from .instrument import OpCounts
from .params import SchemeParams
from .ring import Domain, RingElement

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
CIPHERTEXT_MAGIC = b"NMCT"
PUBLIC_KEY_MAGIC = b"NMPK"
SECRET_KEY_MAGIC = b"NMSK"
CACHE_ENTRY_MAGIC = b"NMCE"

_HEADER = struct.Struct("<4sBQQd")
_CT_META = struct.Struct("<dB")
_U64 = struct.Struct("<Q")

Serializable = Union[Ciphertext, PublicKey, SecretKey, CacheEntry]


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def unpack(self, layout: struct.Struct) -> tuple:
        if self.offset + layout.size > len(self.data):
            raise FormatError(
                f"Truncated input: need {layout.size} bytes at offset {self.offset}, "
                f"have {len(self.data) - self.offset}"
            )
        values = layout.unpack_from(self.data, self.offset)
        self.offset += layout.size
        return values

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.offset + size > len(self.data):
            raise FormatError(f"Truncated input: array of {count} values cut short")
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return out

    def rest(self) -> bytes:
        return self.data[self.offset :]

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(f"{len(self.data) - self.offset} trailing bytes after object")


def _header(magic: bytes, params: SchemeParams) -> bytes:
    return _HEADER.pack(magic, FORMAT_VERSION, params.ring_degree, params.modulus, params.scale)


def _read_header(
    reader: _Reader, magic: bytes, params: Optional[SchemeParams]
) -> SchemeParams:
    found, version, n, q, scale = reader.unpack(_HEADER)
    if found != magic:
        raise FormatError(f"Expecting magic {magic!r}, found {found!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"Unsupported format version {version}")
    if params is None:
        try:
            return SchemeParams(ring_degree=n, modulus=q, scale=scale)
        except HeCacheError as ex:
            raise FormatError(f"Header describes invalid parameters: {ex}") from None
    if (n, q, scale) != (params.ring_degree, params.modulus, params.scale):
        raise ParamsMismatchError(
            f"Stored object uses N={n}, q={q}, Delta={scale:g}; expecting {params}"
        )
    return params


def _poly_bytes(x: RingElement) -> bytes:
    return x.coeffs.astype("<u8").tobytes()


def _read_poly(reader: _Reader, params: SchemeParams, domain: Domain) -> RingElement:
    raw = reader.array("<u8", params.ring_degree)
    if raw.size and raw.max() >= params.modulus:
        raise FormatError("Stored residue is not reduced modulo q")
    return RingElement(params, raw.astype(np.int64), domain)


def dump_ciphertext(ct: Ciphertext) -> bytes:
    return b"".join(
        (
            _header(CIPHERTEXT_MAGIC, ct.params),
            _CT_META.pack(ct.scale, ct.depth),
            _poly_bytes(ct.c0),
            _poly_bytes(ct.c1),
        )
    )


def _read_ciphertext(reader: _Reader, params: Optional[SchemeParams]) -> Ciphertext:
    params = _read_header(reader, CIPHERTEXT_MAGIC, params)
    scale, depth = reader.unpack(_CT_META)
    c0 = _read_poly(reader, params, Domain.EVALUATION)
    c1 = _read_poly(reader, params, Domain.EVALUATION)
    try:
        return Ciphertext(c0, c1, scale, depth)
    except HeCacheError as ex:
        raise FormatError(f"Inconsistent ciphertext metadata: {ex}") from None


def load_ciphertext(data: bytes, params: Optional[SchemeParams] = None) -> Ciphertext:
    """
    Raises:
    * FormatError -- Bad magic, version, metadata or truncated data.
    * ParamsMismatchError -- `params` given and the header disagrees.
    """
    reader = _Reader(data)
    ct = _read_ciphertext(reader, params)
    reader.finish()
    return ct


def dump_public_key(pk: PublicKey) -> bytes:
    return _header(PUBLIC_KEY_MAGIC, pk.params) + _poly_bytes(pk.pk0) + _poly_bytes(pk.pk1)


def load_public_key(data: bytes, params: Optional[SchemeParams] = None) -> PublicKey:
    reader = _Reader(data)
    params = _read_header(reader, PUBLIC_KEY_MAGIC, params)
    pk0 = _read_poly(reader, params, Domain.EVALUATION)
    pk1 = _read_poly(reader, params, Domain.EVALUATION)
    reader.finish()
    return PublicKey(pk0, pk1)


def dump_secret_key(sk: SecretKey) -> bytes:
    return _header(SECRET_KEY_MAGIC, sk.params) + _poly_bytes(sk.s)


def load_secret_key(data: bytes, params: Optional[SchemeParams] = None) -> SecretKey:
    reader = _Reader(data)
    params = _read_header(reader, SECRET_KEY_MAGIC, params)
    s = _read_poly(reader, params, Domain.COEFFICIENT)
    reader.finish()
    try:
        return SecretKey.from_coefficients(s)
    except HeCacheError as ex:
        raise FormatError(f"Stored secret key is not ternary: {ex}") from None


def dump_cache_entry(entry: CacheEntry) -> bytes:
    return b"".join(
        (
            _header(CACHE_ENTRY_MAGIC, entry.params),
            _U64.pack(entry.base_size),
            entry.base_slots.astype("<f8").tobytes(),
            dump_ciphertext(entry.base_ciphertext),
        )
    )


def load_cache_entry(data: bytes, params: Optional[SchemeParams] = None) -> CacheEntry:
    """
    Restores a cache entry. Creation counts and wall time are not stored, the
    loaded entry reports zero for both.
    """
    reader = _Reader(data)
    params = _read_header(reader, CACHE_ENTRY_MAGIC, params)
    (base_size,) = reader.unpack(_U64)
    slots = reader.array("<f8", params.slot_count).astype(np.float64)
    ct = load_ciphertext(reader.rest(), params)
    if ct.depth != 0:
        raise FormatError("A cache entry's base ciphertext must be at depth 0")
    try:
        slots = tile_base(slots, params)
        plaintext = encode_vandermonde(slots, vandermonde_for(params), params)
    except HeCacheError as ex:
        raise FormatError(f"Stored base vector is unusable: {ex}") from None
    return CacheEntry(slots, int(base_size), plaintext, ct, OpCounts(), 0.0)


_DUMPERS = {
    Ciphertext: dump_ciphertext,
    PublicKey: dump_public_key,
    SecretKey: dump_secret_key,
    CacheEntry: dump_cache_entry,
}
_LOADERS = {
    CIPHERTEXT_MAGIC: load_ciphertext,
    PUBLIC_KEY_MAGIC: load_public_key,
    SECRET_KEY_MAGIC: load_secret_key,
    CACHE_ENTRY_MAGIC: load_cache_entry,
}


def save(path: Union[str, Path], obj: Serializable) -> None:
    """
    Writes any serializable object to `path`.

    Raises:
    * OutputError -- The file cannot be written.
    """
    try:
        dumper = _DUMPERS[type(obj)]
    except KeyError:
        raise TypeError(f"Cannot serialize {type(obj).__name__}") from None
    try:
        Path(path).write_bytes(dumper(obj))  # type: ignore[operator]
    except OSError as ex:
        raise OutputError(f"Cannot write {path}: {ex}") from None
    logger.debug("Wrote %s to %s", type(obj).__name__, path)


def load(path: Union[str, Path], params: Optional[SchemeParams] = None) -> Serializable:
    """
    Reads whichever object `path` holds, dispatching on the magic bytes.

    Raises:
    * FormatError -- Unreadable file, unknown magic or corrupt content.
    * ParamsMismatchError -- `params` given and the header disagrees.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as ex:
        raise FormatError(f"Cannot read {path}: {ex}") from None
    loader = _LOADERS.get(data[:4])
    if loader is None:
        raise FormatError(f"{path} holds no known object (magic {data[:4]!r})")
    return loader(data, params)  # type: ignore[operator]
