from __future__ import annotations

import numpy as np
import pytest

from hecache.encoding import (
    Plaintext,
    build_vandermonde,
    decode,
    encode_fast,
    encode_vandermonde,
    evaluate_slots,
    fft_coefficients,
    solve_coefficients,
    vandermonde_for,
)
from hecache.errors import ParameterError, RangeError
from hecache.noise import encoding_tolerance
from hecache.params import SchemeParams
from hecache.ring import centered, ring_add, ring_mul, round_half_away, to_coefficient

SCALE = 2.0**25


def test_dimension_one():
    system = build_vandermonde(1)
    assert system.matrix.shape == (1, 1)
    assert system.matrix[0, 0] == pytest.approx(1.0)


@pytest.mark.parametrize("d", [2, 8, 64])
def test_matrix_is_scaled_unitary(d):
    system = build_vandermonde(d)
    v = system.matrix
    assert np.allclose(v[:, 0], 1.0)
    assert np.allclose(v @ v.conj().T, d * np.eye(d), atol=1e-9)
    assert np.allclose(np.linalg.inv(v), v.conj().T / d, atol=1e-9)


def test_root_is_primitive():
    d = 8
    omega = build_vandermonde(d).omega
    assert abs(omega ** (4 * d) - 1) < 1e-12
    for k in range(1, 4 * d):
        assert abs(omega**k - 1) > 1e-6


def test_nodes_are_distinct():
    nodes = build_vandermonde(64).nodes
    gaps = np.abs(nodes[:, None] - nodes[None, :]) + np.eye(64)
    assert gaps.min() > 1e-3


def test_dimension_checks(params16):
    with pytest.raises(ParameterError):
        build_vandermonde(3)
    with pytest.raises(ParameterError):
        build_vandermonde(16, params16)
    with pytest.raises(ParameterError):
        encode_vandermonde([1.0], build_vandermonde(4), params16)


@pytest.mark.parametrize("d", [2, 8, 64])
def test_explicit_inverse_agrees_with_fft(d):
    rng = np.random.default_rng(d)
    system = build_vandermonde(d)
    for _ in range(100):
        targets = rng.uniform(-1.0, 1.0, d) * SCALE
        slow = round_half_away(solve_coefficients(system, targets))
        fast = round_half_away(fft_coefficients(targets))
        assert np.max(np.abs(slow - fast)) <= 1


def test_dense_solver_agrees_with_adjoint():
    rng = np.random.default_rng(5)
    system = build_vandermonde(8)
    targets = rng.uniform(-1.0, 1.0, 8) * SCALE
    adjoint = solve_coefficients(system, targets)
    dense = solve_coefficients(system, targets, solve=True)
    assert np.allclose(adjoint, dense, atol=1e-6)


@pytest.mark.parametrize("d", [8, 64])
def test_embedding_inverts_solution(d):
    rng = np.random.default_rng(d + 1)
    system = build_vandermonde(d)
    targets = rng.uniform(-1.0, 1.0, d)
    coeffs = fft_coefficients(targets)
    assert np.allclose(evaluate_slots(coeffs, system), targets, atol=1e-9)
    assert np.allclose(evaluate_slots(coeffs), targets, atol=1e-9)


def test_zero_slots_give_zero_polynomial(params16):
    pt = encode_vandermonde(np.zeros(8), vandermonde_for(params16), params16)
    assert pt.poly.is_zero()
    assert np.all(decode(pt) == 0)


def test_constant_vector_is_constant_polynomial(params64):
    c = 0.75
    pt = encode_vandermonde(np.full(params64.slot_count, c), vandermonde_for(params64), params64)
    coeffs = centered(pt.poly)
    assert coeffs[0] == round(params64.scale * c)
    assert np.max(np.abs(coeffs[1:])) <= 1


@pytest.mark.parametrize("n", [16, 64])
def test_roundtrip_within_encoding_tolerance(n):
    params = SchemeParams.toy(n)
    rng = np.random.default_rng(n)
    tolerance = encoding_tolerance(params)
    for _ in range(2000):
        m = rng.uniform(-1.0, 1.0, params.slot_count)
        assert np.max(np.abs(decode(encode_fast(m, params)) - m)) <= tolerance


@pytest.mark.slow
def test_reference_roundtrip_over_ten_thousand_vectors(reference_params):
    rng = np.random.default_rng(4096)
    tolerance = encoding_tolerance(reference_params)
    worst = 0.0
    for _ in range(10_000):
        m = rng.uniform(-1.0, 1.0, reference_params.slot_count)
        error = np.max(np.abs(decode(encode_fast(m, reference_params)) - m))
        worst = max(worst, float(error))
    assert worst <= tolerance


def test_encoders_produce_the_same_polynomial(params64):
    rng = np.random.default_rng(11)
    system = vandermonde_for(params64)
    for _ in range(50):
        m = rng.uniform(-4.0, 4.0, params64.slot_count)
        slow = centered(encode_vandermonde(m, system, params64).poly)
        fast = centered(encode_fast(m, params64).poly)
        assert np.max(np.abs(slow - fast)) <= 1


def test_short_vectors_are_padded(params16):
    pt = encode_fast([0.5, -0.25], params16)
    assert pt.slots_used == 2
    assert decode(pt) == pytest.approx([0.5, -0.25], abs=encoding_tolerance(params16))
    assert encode_fast([], params16).poly.is_zero()


def test_decode_with_explicit_system(params16, rng):
    pt = encode_fast(rng.uniform(-1.0, 1.0, 8), params16)
    assert np.allclose(decode(pt, vandermonde_for(params16)), decode(pt), atol=1e-12)


def test_encoding_is_additive(params64, rng):
    a = rng.uniform(-1.0, 1.0, params64.slot_count)
    b = rng.uniform(-1.0, 1.0, params64.slot_count)
    pa, pb = encode_fast(a, params64), encode_fast(b, params64)
    total = Plaintext(ring_add(pa.poly, pb.poly), params64.scale, params64.slot_count)
    assert np.max(np.abs(decode(total) - (a + b))) <= 2 * encoding_tolerance(params64)


def test_polynomial_product_multiplies_slots(params16, rng):
    a = rng.uniform(-1.0, 1.0, params16.slot_count)
    b = rng.uniform(-1.0, 1.0, params16.slot_count)
    poly = to_coefficient(
        ring_mul(encode_fast(a, params16).poly, encode_fast(b, params16).poly)
    )
    product = Plaintext(poly, params16.scale**2, params16.slot_count)
    assert np.max(np.abs(decode(product) - a * b)) <= 3 * encoding_tolerance(params16)


def test_encoder_input_checks(params16):
    with pytest.raises(ParameterError):
        encode_fast(np.zeros(9), params16)
    with pytest.raises(RangeError):
        encode_fast([params16.max_message_magnitude * 2], params16)
    with pytest.raises(RangeError):
        encode_fast([np.nan], params16)
    with pytest.raises(RangeError):
        encode_vandermonde([np.inf], vandermonde_for(params16), params16)


def test_plaintext_checks(params16):
    poly = encode_fast([1.0], params16).poly
    with pytest.raises(ParameterError):
        Plaintext(poly, 0.0, 1)
    with pytest.raises(ParameterError):
        Plaintext(poly, params16.scale, 9)
