"""Independent reference computations used by the test suite.

Everything here is deliberately implemented without reusing the package's
production code paths: extended-precision brute force via mpmath, direct
dense linear algebra, and least-squares intertwiner recovery.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def wigner_d_highprec(ell, beta):
    """Little-d matrix by direct evaluation of the factorial sum in 50-digit
    arithmetic."""
    beta = mp.mpf(beta)
    c, s = mp.cos(beta / 2), mp.sin(beta / 2)
    n = 2 * ell + 1
    out = np.zeros((n, n))
    for mp_idx, mprime in enumerate(range(-ell, ell + 1)):
        for m_idx, m in enumerate(range(-ell, ell + 1)):
            pref = mp.sqrt(mp.factorial(ell + mprime) * mp.factorial(ell - mprime)
                           * mp.factorial(ell + m) * mp.factorial(ell - m))
            total = mp.mpf(0)
            for k in range(max(0, m - mprime), min(ell + m, ell - mprime) + 1):
                den = (mp.factorial(ell + m - k) * mp.factorial(k)
                       * mp.factorial(ell - mprime - k)
                       * mp.factorial(mprime - m + k))
                total += ((-1) ** (k + mprime - m) / den
                          * c ** (2 * ell + m - mprime - 2 * k)
                          * s ** (mprime - m + 2 * k))
            out[mp_idx, m_idx] = float(pref * total)
    return out


def spherical_harmonic_highprec(ell, m, theta, phi):
    """Y_l^m via mpmath's Legendre functions (Condon-Shortley, orthonormal)."""
    theta, phi = mp.mpf(theta), mp.mpf(phi)
    ma = abs(m)
    # mp.legenp includes the Condon-Shortley phase for type 2 on (-1, 1)
    p = mp.legenp(ell, ma, mp.cos(theta), type=2)
    norm = mp.sqrt((2 * ell + 1) / (4 * mp.pi)
                   * mp.factorial(ell - ma) / mp.factorial(ell + ma))
    val = norm * p * mp.e ** (1j * ma * phi)
    if m < 0:
        val = (-1) ** ma * mp.conj(val)
    return complex(val)


def intertwiner_from_representations(d_blocks_1, d_blocks_2, d_blocks_out):
    """Recover the (unique up to sign) real intertwiner X with
    (D1 x D2) X = X Dout from sampled representation matrices.

    ``d_blocks_*`` are lists of matrices for the same sampled rotations.
    The intertwiner space is one-dimensional because every output degree
    appears exactly once in the product, so the nullspace of the stacked
    commutation constraints pins X up to a complex scalar.  Returns X with
    unit columns; the global sign is arbitrary.
    """
    dim_in = d_blocks_1[0].shape[0] * d_blocks_2[0].shape[0]
    dim_out = d_blocks_out[0].shape[0]
    rows = []
    for d1, d2, dout in zip(d_blocks_1, d_blocks_2, d_blocks_out):
        kron = np.kron(d1, d2)
        # K X - X Dout = 0 on the row-major vec of X (dim_in, dim_out)
        rows.append(np.kron(kron, np.eye(dim_out))
                    - np.kron(np.eye(dim_in), dout.T))
    _, _, vh = np.linalg.svd(np.vstack(rows))
    x = vh[-1].conj().reshape(dim_in, dim_out)
    # rotate the global complex phase so the matrix is real
    idx = np.unravel_index(np.argmax(np.abs(x)), x.shape)
    x = (x * (abs(x[idx]) / x[idx])).real
    x /= np.linalg.norm(x[:, 0])
    return x


def dense_cg_transform(fragments, pairs, out_blocks, out_ell_max):
    """Dense Kronecker-product + projection reference for the nonlinearity.

    ``fragments`` is a list of (B, 2l+1, tau_l) arrays; ``out_blocks`` maps
    (l1, l2, l) to the dense CG matrix.  Returns per-degree concatenations
    in the same pair-major order as the production code.
    """
    L = len(fragments) - 1
    B = fragments[0].shape[0]
    out = [[] for _ in range(L + 1)]
    for l1, l2 in pairs:
        f1, f2 = fragments[l1], fragments[l2]
        if f1.shape[2] == 0 or f2.shape[2] == 0:
            continue
        kron = np.stack([np.kron(f1[b], f2[b]) for b in range(B)])
        for l in range(abs(l1 - l2), min(l1 + l2, out_ell_max) + 1):
            c = out_blocks[(l1, l2, l)]
            out[l].append(np.einsum("rm,brt->bmt", c, kron))
    return [
        np.concatenate(blocks, axis=2) if blocks
        else np.zeros((B, 2 * ell + 1, 0), dtype=complex)
        for ell, blocks in enumerate(out)
    ]


def synthesize_at(coeff_blocks, theta, phi, harmonic):
    """Evaluate a band-limited expansion at arbitrary points.

    ``harmonic(l, m, theta, phi)`` supplies the basis; used to build the
    grid-rotation oracle without the package's transform code.
    """
    out = np.zeros(np.shape(theta), dtype=complex)
    for ell, block in enumerate(coeff_blocks):
        for m in range(-ell, ell + 1):
            out = out + block[m + ell, 0] * harmonic(ell, m, theta, phi)
    return out


def quadrature_weights_by_solve(b):
    """Driscoll-Healy colatitude weights from the exactness conditions
    sum_j w_j P_l(cos theta_j) = 2 delta_{l0}, l < 2b (independent of the
    closed form)."""
    theta = np.pi * (2 * np.arange(2 * b) + 1) / (4 * b)
    x = np.cos(theta)
    rows = [np.polynomial.legendre.Legendre.basis(l)(x) for l in range(2 * b)]
    rhs = np.zeros(2 * b)
    rhs[0] = 2.0
    return np.linalg.solve(np.vstack(rows), rhs)


def finite_difference(fn, array, index, step=1e-5, imag=False):
    """Central difference of a scalar function in one (real or imaginary)
    coordinate of ``array``."""
    delta = 1j * step if imag else step
    orig = array[index]
    array[index] = orig + delta
    plus = fn()
    array[index] = orig - delta
    minus = fn()
    array[index] = orig
    return (plus - minus) / (2.0 * step)
