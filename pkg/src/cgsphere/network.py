"""Forward pass of the fully-Fourier covariant spherical network.

Activations live entirely in Fourier space: a batch of activations is one
complex array per degree l, of shape (batch, 2l+1, tau_l).  Each column is
an irreducible fragment transforming as v -> D^l(R) v under input rotation.
A layer applies the Clebsch-Gordan tensor-product nonlinearity, a covariant
fragment normalization, and a learnable per-degree linear mix.  The network
output is the invariant feature vector built from all l=0 fragments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sht import HarmonicCoefficients
from .so3 import cg_block


@dataclass(frozen=True)
class ActivationType:
    """Fragment counts per degree, tau = (tau_0, ..., tau_L)."""

    tau: tuple

    def __post_init__(self):
        if any(t < 0 for t in self.tau):
            raise ValueError("fragment counts must be non-negative")

    @property
    def bandlimit(self) -> int:
        return len(self.tau) - 1

    def total_entries(self) -> int:
        """Total number of complex scalars in one activation of this type."""
        return sum((2 * ell + 1) * t for ell, t in enumerate(self.tau))


class CovariantActivation:
    """Batched covariant activation: fragments[l] has shape (B, 2l+1, tau_l)."""

    def __init__(self, bandlimit: int, fragments: list):
        if len(fragments) != bandlimit + 1:
            raise ValueError("need one fragment matrix per degree 0..L")
        frags = []
        batch = None
        for ell, f in enumerate(fragments):
            f = np.asarray(f, dtype=complex)
            if f.ndim == 2:
                f = f[None]
            if f.shape[1] != 2 * ell + 1:
                raise ValueError(
                    f"fragment matrix for l={ell} must have {2 * ell + 1} rows, "
                    f"got {f.shape[1]}"
                )
            if batch is None:
                batch = f.shape[0]
            elif f.shape[0] != batch:
                raise ValueError("inconsistent batch size across degrees")
            frags.append(f)
        self.bandlimit = bandlimit
        self.fragments = frags

    @property
    def batch_size(self) -> int:
        return self.fragments[0].shape[0]

    @property
    def type(self) -> ActivationType:
        return ActivationType(tuple(f.shape[2] for f in self.fragments))

    @classmethod
    def from_coefficients(cls, coeffs: HarmonicCoefficients) -> "CovariantActivation":
        """Layer-0 activation: each input channel contributes one fragment per l."""
        return cls(coeffs.bandlimit, [b.copy() for b in coeffs.blocks])

    @classmethod
    def stack(cls, activations: list) -> "CovariantActivation":
        """Stack single-example activations into one batch."""
        L = activations[0].bandlimit
        return cls(L, [
            np.concatenate([a.fragments[ell] for a in activations], axis=0)
            for ell in range(L + 1)
        ])

    def example(self, i: int) -> "CovariantActivation":
        return CovariantActivation(
            self.bandlimit, [f[i:i + 1] for f in self.fragments])

    def rotated(self, d_matrices: list) -> "CovariantActivation":
        """Apply D^l(R) to every fragment (the covariance ground truth)."""
        return CovariantActivation(self.bandlimit, [
            np.einsum("mn,bnt->bmt", d_matrices[ell], f)
            for ell, f in enumerate(self.fragments)
        ])


# --- Clebsch-Gordan pair bookkeeping ---

def cg_pairs(L: int, policy: str = "unordered"):
    """Degree pairs entering the tensor-product nonlinearity."""
    if policy == "unordered":
        return [(l1, l2) for l1 in range(L + 1) for l2 in range(l1, L + 1)]
    if policy == "ordered":
        return [(l1, l2) for l1 in range(L + 1) for l2 in range(L + 1)]
    raise ValueError(f"unknown pair policy {policy!r}")


@dataclass(frozen=True)
class _PairTable:
    """Stacked sparse CG matrix for one (l1, l2) pair, clipped at out_ell_max."""

    ells: tuple
    matrix: sp.csr_matrix      # shape (d1*d2, sum_l (2l+1))
    nnz_per_ell: tuple


_PAIR_CACHE: dict = {}
_CORRUPTION: dict = {}


def corrupt_cg_entry(ell1: int, ell2: int, ell: int, index: int = 0) -> None:
    """Negate one stored CG coefficient (test-sensitivity hook).

    Affects all tables built afterwards; call ``clear_cg_corruption`` to
    restore.
    """
    _CORRUPTION[(ell1, ell2, ell)] = index
    _PAIR_CACHE.clear()


def clear_cg_corruption() -> None:
    _CORRUPTION.clear()
    _PAIR_CACHE.clear()


def _block_dense(ell1: int, ell2: int, ell: int) -> np.ndarray:
    block = cg_block(ell1, ell2, ell)
    mat = block.dense()
    key = (ell1, ell2, ell)
    if key in _CORRUPTION:
        entries = block.entries
        (m1, m2), m, _ = entries[_CORRUPTION[key] % len(entries)]
        row = (m1 + ell1) * (2 * ell2 + 1) + (m2 + ell2)
        mat[row, m + ell] *= -1.0
    return mat


def _pair_table(ell1: int, ell2: int, out_ell_max: int) -> _PairTable:
    key = (ell1, ell2, out_ell_max)
    if key not in _PAIR_CACHE:
        ells = tuple(l for l in range(abs(ell1 - ell2), ell1 + ell2 + 1)
                     if l <= out_ell_max)
        mats = [_block_dense(ell1, ell2, l) for l in ells]
        stacked = sp.csr_matrix(np.hstack(mats)) if mats else None
        nnz = tuple(int(np.count_nonzero(m)) for m in mats)
        _PAIR_CACHE[key] = _PairTable(ells, stacked, nnz)
    return _PAIR_CACHE[key]


def cg_output_type(tau: ActivationType, policy: str = "unordered",
                   out_ell_max: int | None = None) -> ActivationType:
    """Fragment counts after the CG nonlinearity (before linear mixing)."""
    L = tau.bandlimit
    if out_ell_max is None:
        out_ell_max = L
    out = [0] * (L + 1)
    for l1, l2 in cg_pairs(L, policy):
        t = tau.tau[l1] * tau.tau[l2]
        if t == 0:
            continue
        for l in range(abs(l1 - l2), min(l1 + l2, out_ell_max) + 1):
            out[l] += t
    return ActivationType(tuple(out))


def cg_madd_count(tau: ActivationType, policy: str = "unordered",
                  out_ell_max: int | None = None) -> int:
    """Multiply-add count of the sparse CG transform for one example.

    Each stored coefficient touches tau_{l1} * tau_{l2} column pairs.
    """
    L = tau.bandlimit
    if out_ell_max is None:
        out_ell_max = L
    total = 0
    for l1, l2 in cg_pairs(L, policy):
        t = tau.tau[l1] * tau.tau[l2]
        if t == 0:
            continue
        table = _pair_table(l1, l2, out_ell_max)
        total += sum(table.nnz_per_ell) * t
    return total


def cg_nonlinearity(F: CovariantActivation, policy: str = "unordered",
                    out_ell_max: int | None = None) -> CovariantActivation:
    """Tensor-product nonlinearity: all pairwise Kronecker products,
    decomposed into irreducible fragments through the sparse CG matrices.

    Output blocks with the same degree are concatenated horizontally, in
    pair order (l1 ascending, then l2), then degree ascending within a pair.
    """
    L = F.bandlimit
    if out_ell_max is None:
        out_ell_max = L
    B = F.batch_size
    out: list = [[] for _ in range(L + 1)]
    for l1, l2 in cg_pairs(L, policy):
        F1, F2 = F.fragments[l1], F.fragments[l2]
        t1, t2 = F1.shape[2], F2.shape[2]
        if t1 == 0 or t2 == 0:
            continue
        if abs(l1 - l2) > out_ell_max:
            continue
        table = _pair_table(l1, l2, out_ell_max)
        if table.matrix is None:
            continue
        d1, d2 = 2 * l1 + 1, 2 * l2 + 1
        kron = np.einsum("bmi,bnj->bmnij", F1, F2).reshape(B, d1 * d2, t1 * t2)
        y = table.matrix.T @ kron.transpose(1, 0, 2).reshape(d1 * d2, B * t1 * t2)
        start = 0
        for l in table.ells:
            n = 2 * l + 1
            block = y[start:start + n].reshape(n, B, t1 * t2).transpose(1, 0, 2)
            out[l].append(block)
            start += n
    frags = []
    for ell in range(L + 1):
        if out[ell]:
            frags.append(np.concatenate(out[ell], axis=2))
        else:
            frags.append(np.zeros((B, 2 * ell + 1, 0), dtype=complex))
    return CovariantActivation(L, frags)


# --- covariant linear mixing ---

def covariant_linear(F: CovariantActivation, weights: list) -> CovariantActivation:
    """Mix fragments degree by degree: G_l = F_l @ W_l."""
    if len(weights) != F.bandlimit + 1:
        raise ValueError("need one weight matrix per degree")
    frags = []
    for ell, (f, w) in enumerate(zip(F.fragments, weights)):
        if w.shape[0] != f.shape[2]:
            raise ValueError(
                f"weight rows ({w.shape[0]}) must match input fragment count "
                f"({f.shape[2]}) at l={ell}"
            )
        frags.append(f @ w)
    return CovariantActivation(F.bandlimit, frags)


# --- covariant normalization ---

NORM_EPS = 1e-8


@dataclass
class NormState:
    """Expanding-average fragment scales for one layer's post-CG activation."""

    scales: list = field(default_factory=list)   # per-l float arrays (tau_l,)
    count: int = 0

    @classmethod
    def for_type(cls, tau: ActivationType) -> "NormState":
        return cls([np.ones(t) for t in tau.tau], 0)

    def copy(self) -> "NormState":
        return NormState([s.copy() for s in self.scales], self.count)


def covariant_normalize(F: CovariantActivation, norm: NormState,
                        training: bool = False) -> CovariantActivation:
    """Divide each fragment column by its running root-mean-square scale.

    In training mode the expanding average is first updated with the current
    batch's per-fragment RMS.  No mean is ever subtracted: only a
    rotation-invariant positive rescaling keeps the activation covariant.
    """
    if len(norm.scales) != F.bandlimit + 1:
        raise ValueError("norm state does not match activation bandlimit")
    if training:
        for ell, f in enumerate(F.fragments):
            if f.shape[2] != norm.scales[ell].shape[0]:
                raise ValueError(
                    f"norm state has {norm.scales[ell].shape[0]} slots at "
                    f"l={ell}, activation has {f.shape[2]}"
                )
            batch_rms = np.sqrt(np.mean(np.abs(f) ** 2, axis=(0, 1)))
            norm.scales[ell] = (norm.count * norm.scales[ell] + batch_rms) \
                / (norm.count + 1)
        norm.count += 1
    frags = []
    for ell, f in enumerate(F.fragments):
        s = norm.scales[ell]
        # Dead fragments (identically-zero CG outputs, e.g. odd-degree
        # self-couplings of a column with itself) pass through unscaled:
        # dividing their rounding noise by a tiny floor would amplify it.
        denom = np.where(s < NORM_EPS, 1.0, s)
        frags.append(f / denom[None, None, :])
    return CovariantActivation(F.bandlimit, frags)


# --- layer and network composition ---

@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: band limit, input channels and per-layer output types.

    ``layer_types[s]`` is the output type of layer s+1; the final layer's
    type must vanish above l=0 (only invariant components are produced).
    """

    bandlimit: int
    n_in: int
    layer_types: tuple
    pair_policy: str = "unordered"

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("need at least one layer")
        for tau in self.layer_types:
            if tau.bandlimit != self.bandlimit:
                raise ValueError("layer type bandlimit mismatch")
        last = self.layer_types[-1]
        if any(t != 0 for t in last.tau[1:]):
            raise ValueError("final layer type must be zero above l=0")

    @property
    def n_layers(self) -> int:
        return len(self.layer_types)

    def input_type(self) -> ActivationType:
        return ActivationType((self.n_in,) * (self.bandlimit + 1))

    def cg_input_type(self, s: int) -> ActivationType:
        """Post-CG (pre-mixing) type feeding layer s's weights (s = 0-based)."""
        prev = self.input_type() if s == 0 else self.layer_types[s - 1]
        out_max = 0 if s == self.n_layers - 1 else self.bandlimit
        return cg_output_type(prev, self.pair_policy, out_max)

    def head_width(self) -> int:
        """Length of the invariant feature vector."""
        return 2 * (sum(t.tau[0] for t in self.layer_types) + self.n_in)


def tau_schedule(L: int, width: int = 12) -> ActivationType:
    """Fragment-count rule tau_l = ceil(width / sqrt(2l+1))."""
    return ActivationType(tuple(
        int(np.ceil(width / np.sqrt(2 * ell + 1))) for ell in range(L + 1)))


def layer_forward(F: CovariantActivation, weights: list,
                  norm: NormState | None = None, training: bool = False,
                  policy: str = "unordered",
                  out_ell_max: int | None = None) -> CovariantActivation:
    """One network layer: CG nonlinearity, optional normalization, linear mix."""
    H = cg_nonlinearity(F, policy, out_ell_max)
    if norm is not None:
        H = covariant_normalize(H, norm, training)
    return covariant_linear(H, weights)


def invariant_features(layer_outputs: list, input_l0: np.ndarray) -> np.ndarray:
    """Concatenate every layer's l=0 fragments plus the input's l=0
    coefficients, splitting each complex scalar into (real, imag).

    ``input_l0`` has shape (B, 1, n_in).  Output is real, shape
    (B, 2 * (sum_s tau_0^s + n_in)).
    """
    parts = [act.fragments[0][:, 0, :] for act in layer_outputs]
    parts.append(np.asarray(input_l0, dtype=complex)[:, 0, :])
    flat = np.ascontiguousarray(np.concatenate(parts, axis=1))
    return flat.view(float).reshape(flat.shape[0], 2 * flat.shape[1])


def network_forward(coeffs: CovariantActivation, weights: list,
                    norm_states: list | None = None, training: bool = False,
                    policy: str = "unordered", return_layers: bool = False):
    """Full covariant forward pass: S layers then the invariant head.

    ``weights[s]`` is the per-degree weight list of layer s.  The final
    layer only produces l=0 output.  Returns the invariant feature vector
    (B, head_width), and optionally the list of per-layer activations.
    """
    S = len(weights)
    L = coeffs.bandlimit
    acts = []
    F = coeffs
    for s in range(S):
        out_max = 0 if s == S - 1 else L
        norm = norm_states[s] if norm_states is not None else None
        F = layer_forward(F, weights[s], norm, training, policy, out_max)
        acts.append(F)
    feats = invariant_features(acts, coeffs.fragments[0])
    if return_layers:
        return feats, acts
    return feats
