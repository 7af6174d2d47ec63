from __future__ import annotations

import numpy as np
import pytest

from hecache import serialize
from hecache.cache import CacheEntry, SelectionPolicy, nemesis_encrypt, precompute
from hecache.ckks import Ciphertext, PublicKey, SecretKey, decrypt, encrypt, mul_ct_pt
from hecache.encoding import decode, encode_fast
from hecache.errors import FormatError, OutputError, ParamsMismatchError
from hecache.noise import product_tolerance, randomization_tolerance


@pytest.fixture
def ciphertext(keys16, rng):
    _, pk = keys16
    return encrypt(pk, encode_fast([0.5, -1.0], pk.params), rng)


def test_ciphertext_roundtrip(keys16, ciphertext, rng):
    _, pk = keys16
    data = serialize.dump_ciphertext(ciphertext)
    assert data[:4] == b"NMCT"
    assert serialize.load_ciphertext(data) == ciphertext
    assert serialize.load_ciphertext(data, pk.params) == ciphertext
    deep = mul_ct_pt(ciphertext, encode_fast([2.0], pk.params))
    restored = serialize.load_ciphertext(serialize.dump_ciphertext(deep))
    assert restored == deep
    assert restored.depth == 1


def test_key_roundtrip(keys16):
    sk, pk = keys16
    loaded_pk = serialize.load_public_key(serialize.dump_public_key(pk))
    assert loaded_pk.pk0 == pk.pk0 and loaded_pk.pk1 == pk.pk1
    loaded_sk = serialize.load_secret_key(serialize.dump_secret_key(sk))
    assert loaded_sk.s == sk.s
    assert loaded_sk.s_eval == sk.s_eval


def test_cache_entry_roundtrip(keys16, rng):
    sk, pk = keys16
    params = pk.params
    entry = precompute([], SelectionPolicy.fixed([1.0, 2.0]), pk, params, rng)
    loaded = serialize.load_cache_entry(serialize.dump_cache_entry(entry), params)
    assert loaded.base_size == entry.base_size
    assert np.array_equal(loaded.base_slots, entry.base_slots)
    assert loaded.base_ciphertext == entry.base_ciphertext
    assert loaded.base_plaintext.poly == entry.base_plaintext.poly
    assert loaded.counts.encryptions == 0
    m = rng.uniform(-1, 1, 8)
    out = decode(decrypt(sk, nemesis_encrypt(loaded, m, None, rng)))
    tolerance = product_tolerance(params, 1.0, 2.0) + randomization_tolerance(params)
    assert np.max(np.abs(out - m)) <= tolerance


def test_wrong_params_rejected(ciphertext, params64):
    data = serialize.dump_ciphertext(ciphertext)
    with pytest.raises(ParamsMismatchError):
        serialize.load_ciphertext(data, params64)


def test_corrupt_input(ciphertext):
    data = serialize.dump_ciphertext(ciphertext)
    with pytest.raises(FormatError, match="magic"):
        serialize.load_ciphertext(b"NMPK" + data[4:])
    with pytest.raises(FormatError, match="version"):
        serialize.load_ciphertext(data[:4] + b"\x07" + data[5:])
    with pytest.raises(FormatError, match="Truncated"):
        serialize.load_ciphertext(data[:-1])
    with pytest.raises(FormatError, match="trailing"):
        serialize.load_ciphertext(data + b"\x00")
    with pytest.raises(FormatError):
        serialize.load_ciphertext(data[:10])


def test_unreduced_residue(ciphertext):
    data = bytearray(serialize.dump_ciphertext(ciphertext))
    offset = serialize._HEADER.size + serialize._CT_META.size
    data[offset : offset + 8] = (2**64 - 1).to_bytes(8, "little")
    with pytest.raises(FormatError, match="reduced"):
        serialize.load_ciphertext(bytes(data))


def test_save_and_load_dispatch(tmp_path, keys16, ciphertext, rng):
    sk, pk = keys16
    entry = precompute([], SelectionPolicy.all_ones(), pk, pk.params, rng)
    for name, obj, kind in [
        ("ct.nmct", ciphertext, Ciphertext),
        ("pk.nmpk", pk, PublicKey),
        ("sk.nmsk", sk, SecretKey),
        ("entry.nmce", entry, CacheEntry),
    ]:
        path = tmp_path / name
        serialize.save(path, obj)
        assert isinstance(serialize.load(path, pk.params), kind)
    (tmp_path / "junk").write_bytes(b"JUNKJUNK")
    with pytest.raises(FormatError, match="no known object"):
        serialize.load(tmp_path / "junk")
    with pytest.raises(FormatError):
        serialize.load(tmp_path / "missing")
    with pytest.raises(OutputError):
        serialize.save(tmp_path / "no" / "dir" / "ct.nmct", ciphertext)
    with pytest.raises(TypeError):
        serialize.save(tmp_path / "x", "not a ciphertext")
