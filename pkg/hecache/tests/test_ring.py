from __future__ import annotations

import numpy as np
import pytest

from hecache.errors import DomainError, ParameterError, ParamsMismatchError
from hecache.instrument import counting
from hecache.params import SchemeParams
from hecache.ring import (
    Domain,
    RingElement,
    centered,
    negacyclic_root,
    ntt_forward,
    ntt_inverse,
    ring_add,
    ring_from_ints,
    ring_monomial,
    ring_mul,
    ring_neg,
    ring_scalar_mul,
    ring_sub,
    ring_zero,
    round_half_away,
    sample_gaussian,
    sample_gaussian_integers,
    sample_ternary,
    sample_uniform,
    to_coefficient,
)


def schoolbook(a: list[int], b: list[int], q: int) -> list[int]:
    """Negacyclic product with Python integers."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            if i + j < n:
                out[i + j] += a[i] * b[j]
            else:
                out[i + j - n] -= a[i] * b[j]
    return [v % q for v in out]


@pytest.mark.parametrize("n", [8, 16])
def test_ring_mul_matches_schoolbook(n):
    params = SchemeParams.toy(n)
    rng = np.random.default_rng(n)
    for _ in range(200):
        a = sample_uniform(params, rng)
        b = sample_uniform(params, rng)
        product = to_coefficient(ring_mul(a, b))
        assert product.coeffs.tolist() == schoolbook(
            a.coeffs.tolist(), b.coeffs.tolist(), params.modulus
        )


def test_root_is_primitive(params16):
    q = params16.modulus
    psi = negacyclic_root(params16)
    assert pow(psi, params16.ring_degree, q) == q - 1
    assert pow(psi, 2 * params16.ring_degree, q) == 1


def test_forward_ntt_evaluates_at_odd_powers(params8, rng):
    q = params8.modulus
    n = params8.ring_degree
    psi = negacyclic_root(params8)
    a = sample_uniform(params8, rng)
    coeffs = a.coeffs.tolist()
    expected = [
        sum(c * pow(psi, (2 * k + 1) * i, q) for i, c in enumerate(coeffs)) % q
        for k in range(n)
    ]
    assert ntt_forward(a).coeffs.tolist() == expected


def test_inverse_ntt_matches_interpolation(params8, rng):
    q = params8.modulus
    n = params8.ring_degree
    psi_inv = pow(negacyclic_root(params8), -1, q)
    n_inv = pow(n, -1, q)
    values = sample_uniform(params8, rng, Domain.EVALUATION)
    evals = values.coeffs.tolist()
    expected = [
        n_inv * sum(x * pow(psi_inv, (2 * k + 1) * i, q) for k, x in enumerate(evals)) % q
        for i in range(n)
    ]
    assert ntt_inverse(values).coeffs.tolist() == expected


@pytest.mark.parametrize("n", [8, 64, 1024])
def test_ntt_roundtrip(n):
    params = SchemeParams.toy(n)
    rng = np.random.default_rng(n)
    for _ in range(5):
        a = sample_uniform(params, rng)
        assert ntt_inverse(ntt_forward(a)) == a
    zero = ring_zero(params)
    assert ntt_forward(zero).is_zero()


def test_ntt_rejects_wrong_domain(params16, rng):
    a = sample_uniform(params16, rng)
    with pytest.raises(DomainError):
        ntt_inverse(a)
    with pytest.raises(DomainError):
        ntt_forward(ntt_forward(a))


def test_add_sub_against_big_integers(params16, rng):
    q = params16.modulus
    a = sample_uniform(params16, rng)
    b = sample_uniform(params16, rng)
    total = ring_add(a, b).coeffs.tolist()
    diff = ring_sub(a, b).coeffs.tolist()
    for x, y, s, d in zip(a.coeffs.tolist(), b.coeffs.tolist(), total, diff):
        assert s == (x + y) % q
        assert d == (x - y) % q
    assert ring_add(a, ring_zero(params16)) == a
    assert ring_add(a, ring_neg(a)).is_zero()
    assert ring_scalar_mul(a, -1) == ring_neg(a)


def test_scalar_mul_against_big_integers(params16, rng):
    a = sample_uniform(params16, rng)
    q = params16.modulus
    for k in (0, 1, q - 1, 2**80 + 12345, -(2**70)):
        expected = [c * k % q for c in a.coeffs.tolist()]
        assert ring_scalar_mul(a, k).coeffs.tolist() == expected


def test_operand_checks(params16, params8, rng):
    a = sample_uniform(params16, rng)
    with pytest.raises(ParamsMismatchError):
        ring_add(a, sample_uniform(params8, rng))
    with pytest.raises(ParamsMismatchError):
        ring_mul(a, sample_uniform(params8, rng))
    with pytest.raises(DomainError):
        ring_add(a, ntt_forward(a))


def test_ring_laws(params16, rng):
    a, b, c = (sample_uniform(params16, rng) for _ in range(3))
    assert ring_mul(a, b) == ring_mul(b, a)
    assert ring_mul(ring_mul(a, b), c) == ring_mul(a, ring_mul(b, c))
    assert ring_mul(a, ring_add(b, c)) == ring_add(ring_mul(a, b), ring_mul(a, c))
    assert to_coefficient(ring_mul(a, ring_monomial(params16, 0))) == a


def test_wraparound_is_negacyclic(params16):
    half = ring_monomial(params16, params16.ring_degree // 2)
    product = to_coefficient(ring_mul(half, half))
    assert centered(product).tolist() == [-1] + [0] * (params16.ring_degree - 1)


def test_ring_mul_counters(params16, rng):
    a = sample_uniform(params16, rng)
    b = sample_uniform(params16, rng, Domain.EVALUATION)
    with counting() as ops:
        ring_mul(a, b)
    assert ops.ring_muls == 1
    assert ops.ntts == 1


def test_element_validation(params8):
    with pytest.raises(ParameterError):
        RingElement(params8, np.zeros(7, dtype=np.int64))
    with pytest.raises(ParameterError):
        RingElement(params8, np.full(8, params8.modulus, dtype=np.int64))
    element = ring_from_ints(params8, [-1, 2, -3, 4, 0, 0, 0, 2**70])
    assert centered(element).tolist()[:5] == [-1, 2, -3, 4, 0]
    assert element.coeffs[7] == 2**70 % params8.modulus
    with pytest.raises(ValueError):
        element.coeffs[0] = 5


def test_round_half_away():
    values = np.array([0.5, -0.5, 1.49, -2.5, 0.0])
    assert round_half_away(values).tolist() == [1.0, -1.0, 1.0, -3.0, 0.0]


def test_ternary_residues(params64, rng):
    with counting() as ops:
        s = sample_ternary(params64, rng)
    assert set(centered(s).tolist()) <= {-1, 0, 1}
    assert ops.ternary_samples == 1


def test_gaussian_statistics():
    rng = np.random.default_rng(3)
    sigma = 3.2
    draws = sample_gaussian_integers(rng, sigma, 100_000)
    assert abs(draws.mean()) < 5 * sigma / np.sqrt(draws.size)
    assert abs(draws.std() - sigma) < 0.05 * sigma
    assert draws.dtype == np.int64


def test_gaussian_residues_and_counter(params16, rng):
    with counting() as ops:
        e = sample_gaussian(params16, rng, 3.2)
    assert ops.gaussian_samples == params16.ring_degree
    assert np.max(np.abs(centered(e))) < 3.2 * 12
    with pytest.raises(ParameterError):
        sample_gaussian(params16, rng, 0.0)


def test_samplers_are_deterministic(params16):
    first = sample_uniform(params16, np.random.default_rng(9))
    second = sample_uniform(params16, np.random.default_rng(9))
    assert first == second
    assert first != sample_uniform(params16, np.random.default_rng(10))
