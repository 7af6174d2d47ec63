from __future__ import annotations

import numpy as np
import pytest

from hecache.cache import (
    PolicyKind,
    SelectionPolicy,
    check_batch_size,
    chunk_and_encrypt,
    chunk_count,
    nemesis_encrypt,
    precompute,
    randomize,
    reconstruct,
    tile_base,
)
from hecache.ckks import decrypt, decrypt_vector, encrypt, keygen
from hecache.encoding import decode, encode_fast
from hecache.errors import CacheConstructionError, ParameterError, ParamsMismatchError, RangeError
from hecache.instrument import counting
from hecache.noise import fresh_tolerance, product_tolerance, randomization_tolerance


@pytest.fixture
def ones_cache(keys16, rng):
    _, pk = keys16
    return precompute([], SelectionPolicy.all_ones(), pk, pk.params, rng)


def nemesis_tolerance(params, max_multiplier=1.0, max_base=1.0):
    return product_tolerance(params, max_multiplier, max_base) + randomization_tolerance(params)


def test_all_ones_precompute(keys16, ones_cache):
    sk, pk = keys16
    assert ones_cache.base_size == pk.params.slot_count
    assert ones_cache.base_ciphertext.depth == 0
    assert ones_cache.counts.encryptions == 1
    assert ones_cache.counts.precomputes == 1
    out = decode(decrypt(sk, ones_cache.base_ciphertext))
    assert np.max(np.abs(out - 1.0)) <= fresh_tolerance(pk.params)


def test_fixed_precompute(keys16, rng):
    sk, pk = keys16
    cache = precompute([], SelectionPolicy.fixed([2.0]), pk, pk.params, rng)
    assert np.all(cache.base_slots == 2.0)
    assert np.max(np.abs(decode(decrypt(sk, cache.base_ciphertext)) - 2.0)) <= fresh_tolerance(
        pk.params
    )


def test_zero_base_is_rejected(keys16, rng):
    _, pk = keys16
    with pytest.raises(CacheConstructionError):
        precompute([], SelectionPolicy.fixed([1.0, 0.0]), pk, pk.params, rng)


def test_precompute_checks_ring(keys16, params64, rng):
    _, pk = keys16
    with pytest.raises(ParamsMismatchError):
        precompute([], SelectionPolicy.all_ones(), pk, params64, rng)


def test_frequency_policy_ranks_values():
    candidates = [3.0, 3.0, 3.04, 1.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, np.nan]
    policy = SelectionPolicy.frequency()
    assert policy.select(candidates, 5).tolist() == [3.0, 1.0, 2.0, 3.0, 1.0]
    assert SelectionPolicy.frequency(top_k=1).select(candidates, 3).tolist() == [3.0] * 3
    with pytest.raises(CacheConstructionError):
        policy.select([0.0, 0.01], 4)


def test_policy_from_name():
    assert SelectionPolicy.from_name("all-ones").kind is PolicyKind.ALL_ONES
    assert SelectionPolicy.from_name("freq").kind is PolicyKind.FREQUENCY
    assert SelectionPolicy.from_name("fixed", [1, 2]).values == (1.0, 2.0)
    with pytest.raises(ParameterError):
        SelectionPolicy.from_name("fixed")
    with pytest.raises(ParameterError):
        SelectionPolicy.from_name("median")


def test_tile_base(params16):
    assert tile_base([1.0, 2.0, 4.0], params16).tolist() == [1, 2, 4, 1, 2, 4, 1, 2]
    with pytest.raises(ParameterError):
        tile_base([], params16)
    with pytest.raises(ParameterError):
        tile_base(np.ones(9), params16)


def test_reconstruct(keys16, ones_cache, rng):
    sk, pk = keys16
    params = pk.params
    for _ in range(20):
        m = rng.uniform(-1, 1, params.slot_count)
        ct = reconstruct(ones_cache, m)
        assert ct.depth == 1
        assert np.max(np.abs(decode(decrypt(sk, ct)) - m)) <= product_tolerance(params, 1.0)


def test_reconstruct_base_and_zero(keys16, rng):
    sk, pk = keys16
    params = pk.params
    cache = precompute([], SelectionPolicy.fixed([1.0, 2.0, 4.0]), pk, params, rng)
    tolerance = product_tolerance(params, 1.0, 4.0)
    base = decode(decrypt(sk, reconstruct(cache, cache.base_slots)))
    assert np.max(np.abs(base - cache.base_slots)) <= tolerance
    zero = decode(decrypt(sk, reconstruct(cache, np.zeros(params.slot_count))))
    assert np.max(np.abs(zero)) <= tolerance


def test_reconstruct_spends_no_encryption(ones_cache, rng):
    m = rng.uniform(-1, 1, 8)
    with counting() as ops:
        reconstruct(ones_cache, m)
    assert ops.encryptions == 0
    assert ops.ternary_samples == 0
    assert ops.gaussian_samples == 0
    assert ops.uniform_samples == 0


def test_reconstruct_range_checks(keys16, ones_cache, rng):
    _, pk = keys16
    with pytest.raises(RangeError):
        reconstruct(ones_cache, [100.0])
    with pytest.raises(RangeError):
        reconstruct(ones_cache, [np.nan])
    with pytest.raises(ParameterError):
        reconstruct(ones_cache, np.zeros(9))
    small = precompute([], SelectionPolicy.fixed([0.01]), pk, pk.params, rng)
    with pytest.raises(RangeError):
        reconstruct(small, [1.0])


def test_reconstruct_keeps_products_inside_the_budget(keys16, rng):
    sk, pk = keys16
    params = pk.params
    wide = precompute([], SelectionPolicy.fixed([64.0]), pk, params, rng)
    # m / b = 15.6 is a legal multiplier, but m = 1000 would wrap at scale Delta**2.
    with pytest.raises(RangeError, match=r"m\[0\] = 1000"):
        reconstruct(wide, np.full(params.slot_count, 1000.0))
    quadruple = precompute([], SelectionPolicy.fixed([4.0]), pk, params, rng)
    with pytest.raises(RangeError):
        reconstruct(quadruple, [256.0])
    edge = np.full(params.slot_count, params.max_message_magnitude)
    out = decode(decrypt(sk, reconstruct(wide, edge)))
    assert np.max(np.abs(out - edge)) <= product_tolerance(params, 1.0, 64.0)


def test_base_over_budget_is_rejected(keys16, rng):
    _, pk = keys16
    with pytest.raises(CacheConstructionError):
        precompute([], SelectionPolicy.fixed([65.0]), pk, pk.params, rng)
    with pytest.raises(CacheConstructionError):
        tile_base([1.0, np.inf], pk.params)


def test_randomize(keys16, ones_cache, rng):
    sk, pk = keys16
    params = pk.params
    ct = reconstruct(ones_cache, rng.uniform(-1, 1, 8))
    base = decode(decrypt(sk, ct))
    first = randomize(ct, None, rng)
    second = randomize(ct, None, rng)
    assert first.c0 != second.c0
    assert first.c1 == ct.c1
    for _ in range(100):
        noisy = decode(decrypt(sk, randomize(ct, 3.2, rng)))
        assert np.max(np.abs(noisy - base)) <= randomization_tolerance(params)
    with pytest.raises(ParameterError):
        randomize(ct, 0.0, rng)
    with pytest.raises(ParameterError):
        randomize(ct, -1.0, rng)


@pytest.mark.parametrize(
    "policy,max_base",
    [(SelectionPolicy.all_ones(), 1.0), (SelectionPolicy.fixed([1.0, 2.0, 4.0]), 4.0)],
)
def test_nemesis_encrypt(keys16, policy, max_base):
    sk, pk = keys16
    params = pk.params
    rng = np.random.default_rng(1)
    cache = precompute([], policy, pk, params, rng)
    tolerance = nemesis_tolerance(params, 1.0, max_base)
    for _ in range(100):
        m = rng.uniform(-1, 1, params.slot_count)
        out = decode(decrypt(sk, nemesis_encrypt(cache, m, None, rng)))
        assert np.max(np.abs(out - m)) <= tolerance


def test_nemesis_encrypt_cost(keys16, ones_cache, rng):
    n = keys16[1].params.ring_degree
    with counting() as ops:
        nemesis_encrypt(ones_cache, rng.uniform(-1, 1, 8), None, rng)
    assert ops.encryptions == 0
    assert ops.ternary_samples == 0
    assert ops.gaussian_samples == n
    assert ops.ring_muls == 2


def test_nemesis_is_deterministic_and_hiding(keys16):
    _, pk = keys16
    params = pk.params
    m = np.linspace(-1, 1, 8)

    def run(seed):
        rng = np.random.default_rng(seed)
        cache = precompute([], SelectionPolicy.all_ones(), pk, params, rng)
        return nemesis_encrypt(cache, m, None, rng), cache, rng

    first, cache, rng = run(5)
    assert run(5)[0] == first
    assert run(6)[0] != first
    seen = {nemesis_encrypt(cache, m, None, rng).c0.coeffs.tobytes() for _ in range(100)}
    assert len(seen) == 100


def test_chunk_and_encrypt(keys16, rng):
    sk, pk = keys16
    params = pk.params
    weights = rng.uniform(-1, 1, 37)
    with counting() as ops:
        cache = precompute(weights, SelectionPolicy.all_ones(), pk, params, rng)
        cts = chunk_and_encrypt(cache, weights, 8, None, rng)
    assert len(cts) == 5
    assert ops.precomputes == 1
    assert ops.encryptions == 1
    out = decrypt_vector(sk, cts, 8, weights.size)
    assert np.max(np.abs(out - weights)) <= nemesis_tolerance(params)
    small = chunk_and_encrypt(cache, weights, 3, None, rng)
    assert len(small) == 13
    assert np.max(np.abs(decrypt_vector(sk, small, 3, 37) - weights)) <= nemesis_tolerance(params)


def test_chunk_count():
    assert chunk_count(582_026, 2048) == 285
    assert chunk_count(878_538, 2048) == 429
    assert chunk_count(2048, 2048) == 1
    assert chunk_count(2049, 2048) == 2


@pytest.mark.parametrize("batch_size", [0, 9, -1])
def test_bad_batch_size(params16, batch_size):
    with pytest.raises(ParameterError):
        check_batch_size(batch_size, params16)


def test_nemesis_cheaper_than_fresh_encryption(keys16, ones_cache, rng):
    _, pk = keys16
    m = rng.uniform(-1, 1, 8)
    with counting() as fresh:
        encrypt(pk, encode_fast(m, pk.params), rng)
    with counting() as cached:
        nemesis_encrypt(ones_cache, m, None, rng)
    assert cached.encryptions < fresh.encryptions
    assert cached.gaussian_samples < fresh.gaussian_samples
    assert cached.ternary_samples < fresh.ternary_samples


@pytest.mark.slow
def test_reference_all_ones_cache(reference_keys):
    sk, pk = reference_keys
    params = pk.params
    rng = np.random.default_rng(2048)
    cache = precompute([], SelectionPolicy.all_ones(), pk, params, rng)
    assert np.max(np.abs(decode(decrypt(sk, cache.base_ciphertext)) - 1.0)) <= fresh_tolerance(
        params
    )
    tolerance = nemesis_tolerance(params)
    for _ in range(1000):
        m = rng.uniform(-1, 1, params.slot_count)
        out = decode(decrypt(sk, nemesis_encrypt(cache, m, None, rng)))
        assert np.max(np.abs(out - m)) <= tolerance


@pytest.mark.slow
def test_reference_fixed_vector_cache(reference_keys):
    sk, pk = reference_keys
    params = pk.params
    rng = np.random.default_rng(124)
    cache = precompute([], SelectionPolicy.fixed([1.0, 2.0, 4.0]), pk, params, rng)
    tolerance = nemesis_tolerance(params, 1.0, 4.0)
    for batch in range(1000):
        m = rng.uniform(-1, 1, params.slot_count)
        out = decode(decrypt(sk, nemesis_encrypt(cache, m, None, rng)))
        assert np.max(np.abs(out - m)) <= tolerance, batch


@pytest.mark.slow
def test_reference_model_chunking(reference_keys):
    sk, pk = reference_keys
    rng = np.random.default_rng(0)
    weights = rng.uniform(-1, 1, 582_026)
    cache = precompute(weights, SelectionPolicy.all_ones(), pk, pk.params, rng)
    cts = chunk_and_encrypt(cache, weights, 2048, None, rng)
    assert len(cts) == 285
    tail = decrypt_vector(sk, cts[-1:], 2048, weights.size - 284 * 2048)
    assert np.max(np.abs(tail - weights[284 * 2048 :])) <= nemesis_tolerance(pk.params)


def test_keygen_feeds_cache(params64):
    sk, pk = keygen(params64, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    cache = precompute([], SelectionPolicy.all_ones(), pk, params64, rng)
    m = rng.uniform(-1, 1, 10)
    out = decrypt_vector(sk, [nemesis_encrypt(cache, m, None, rng)], 10, 10)
    assert np.max(np.abs(out - m)) <= nemesis_tolerance(params64)
