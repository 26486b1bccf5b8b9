import numpy as np
import pytest

from cgsphere.sht import (
    HarmonicCoefficients,
    SphericalSignal,
    forward_sht,
    grid_angles,
    grid_energy,
    inverse_sht,
    quadrature_weights,
    read_signal,
    rotate_coefficients,
    write_signal,
)
from cgsphere.so3 import (
    EulerAngles,
    random_rotation,
    rotation_matrix,
    spherical_harmonic,
)

import oracles

RNG = np.random.default_rng(42)


def random_coefficients(L, n_ch=1, rng=RNG):
    blocks = [rng.standard_normal((2 * ell + 1, n_ch))
              + 1j * rng.standard_normal((2 * ell + 1, n_ch))
              for ell in range(L + 1)]
    return HarmonicCoefficients(L, blocks)


def test_quadrature_weights_match_exactness_solve():
    for b in (4, 8, 16):
        np.testing.assert_allclose(quadrature_weights(b),
                                   oracles.quadrature_weights_by_solve(b),
                                   atol=1e-12)


def test_forward_constant_signal():
    b = 8
    sig = SphericalSignal(b, 2.5 * np.ones((1, 2 * b, 2 * b)))
    coeffs = forward_sht(sig, 5)
    assert coeffs.blocks[0][0, 0] == pytest.approx(2.5 * np.sqrt(4 * np.pi))
    assert max(np.abs(blk).max() for blk in coeffs.blocks[1:]) < 1e-12


def test_forward_picks_out_single_harmonic():
    b = 8
    theta, phi = grid_angles(b)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    sig = SphericalSignal(b, spherical_harmonic(2, 1, th, ph)[None])
    coeffs = forward_sht(sig, 5)
    assert coeffs.blocks[2][3, 0] == pytest.approx(1.0, abs=1e-10)
    others = np.concatenate([blk.ravel() for blk in coeffs.blocks])
    others[sum(2 * l + 1 for l in range(2)) + 3] = 0.0
    assert np.abs(others).max() < 1e-10


def test_forward_rejects_aliasing():
    sig = SphericalSignal(4, np.zeros((1, 8, 8)))
    with pytest.raises(ValueError):
        forward_sht(sig, 4)


def test_inverse_zero_and_constant():
    b = 6
    zero = HarmonicCoefficients(2, [np.zeros((2 * l + 1, 1), dtype=complex)
                                    for l in range(3)])
    assert np.abs(inverse_sht(zero, b).samples).max() == 0.0
    const = HarmonicCoefficients(0, [np.full((1, 1), np.sqrt(4 * np.pi),
                                             dtype=complex)])
    np.testing.assert_allclose(inverse_sht(const, b).samples,
                               np.ones((1, 2 * b, 2 * b)), atol=1e-13)


def test_round_trip_inverse_then_forward():
    coeffs = random_coefficients(6, n_ch=2)
    sig = inverse_sht(coeffs, 8)
    back = forward_sht(sig, 6)
    for a, b in zip(coeffs.blocks, back.blocks):
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_round_trip_forward_then_inverse_on_bandlimited_grid():
    coeffs = random_coefficients(5)
    sig = inverse_sht(coeffs, 8)
    again = inverse_sht(forward_sht(sig, 5), 8)
    np.testing.assert_allclose(sig.samples, again.samples, atol=1e-10)


def test_parseval():
    coeffs = random_coefficients(6, n_ch=3)
    sig = inverse_sht(coeffs, 8)
    power = sum(np.sum(np.abs(blk) ** 2, axis=0) for blk in coeffs.blocks)
    np.testing.assert_allclose(grid_energy(sig), power, rtol=1e-8)


def test_rotate_coefficients_identity():
    coeffs = random_coefficients(4)
    rot = rotate_coefficients(coeffs, EulerAngles(0.0, 0.0, 0.0))
    for a, b in zip(coeffs.blocks, rot.blocks):
        np.testing.assert_allclose(a, b, atol=1e-14)


def test_rotate_coefficients_l0_invariant():
    coeffs = random_coefficients(4)
    rot = rotate_coefficients(coeffs, random_rotation(RNG))
    np.testing.assert_allclose(coeffs.blocks[0], rot.blocks[0], atol=1e-14)


def _rotated_grid(coeffs, b, rot):
    """Oracle: evaluate the expansion at inversely-rotated grid points."""
    theta, phi = grid_angles(b)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    xyz = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph),
                    np.cos(th)], axis=-1)
    v = xyz @ rotation_matrix(rot)  # row vectors times R = R^-1 applied
    th2 = np.arccos(np.clip(v[..., 2], -1.0, 1.0))
    ph2 = np.arctan2(v[..., 1], v[..., 0])
    return oracles.synthesize_at(coeffs.blocks, th2, ph2, spherical_harmonic)


def test_transform_equivariance_against_grid_rotation():
    b, L = 8, 5
    coeffs = random_coefficients(L)
    rot = random_rotation(RNG)
    grid = _rotated_grid(coeffs, b, rot)
    from_grid = forward_sht(SphericalSignal(b, grid[None]), L)
    reference = rotate_coefficients(coeffs, rot)
    for a, b_ in zip(from_grid.blocks, reference.blocks):
        np.testing.assert_allclose(a, b_, atol=1e-8)


def test_signal_validation():
    with pytest.raises(ValueError):
        SphericalSignal(4, np.zeros((1, 7, 8)))
    with pytest.raises(ValueError):
        SphericalSignal(4, np.full((1, 8, 8), np.nan))


def test_sph1_round_trip(tmp_path):
    coeffs = random_coefficients(4, n_ch=3)
    sig = inverse_sht(coeffs, 6)
    path = tmp_path / "sig.sph"
    write_signal(path, sig)
    back = read_signal(path)
    assert back.bandwidth == 6
    assert back.n_channels == 3
    np.testing.assert_array_equal(back.samples, sig.samples)


def test_sph1_header_layout(tmp_path):
    sig = SphericalSignal(2, np.arange(16).reshape(1, 4, 4) + 0j)
    path = tmp_path / "sig.sph"
    write_signal(path, sig)
    raw = path.read_bytes()
    assert raw[:4] == b"SPH1"
    assert int.from_bytes(raw[4:8], "little") == 2
    assert int.from_bytes(raw[8:12], "little") == 1
    first = np.frombuffer(raw[12:28], dtype="<f8")
    assert first[0] == 0.0 and first[1] == 0.0  # re, im of sample (0, 0)


def test_sph1_bad_magic(tmp_path):
    path = tmp_path / "bad.sph"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError):
        read_signal(path)
