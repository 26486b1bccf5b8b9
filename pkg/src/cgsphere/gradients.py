"""Reverse-mode gradients for the covariant network.

Complex weights are optimized as independent real/imaginary pairs; the
cotangent carried backwards for a complex quantity z is dL/dRe(z) +
i*dL/dIm(z).  Under this convention the adjoint of G = F W is
F_bar = G_bar W^H, W_bar = F^H G_bar, and the adjoint of a bilinear product
contracts each factor's cotangent with the conjugate of the other factor.

Normalization statistics are treated as constants during backpropagation:
the running scales recorded on the forward tape are reused verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    NORM_EPS,
    CovariantActivation,
    NetworkSpec,
    NormState,
    cg_pairs,
    cg_nonlinearity,
    covariant_normalize,
    invariant_features,
    _pair_table,
)


class NumericError(Exception):
    """Non-finite value encountered; carries the offending example index."""

    def __init__(self, message, example_index=None):
        super().__init__(message)
        self.example_index = example_index


@dataclass
class HeadWeights:
    """Real dense classifier on the invariant features: one hidden layer."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class NetworkWeights:
    """All learnable parameters: per-layer complex mixing matrices + head."""

    spec: NetworkSpec
    layers: list          # layers[s][l]: complex (tau_bar_l, tau_l)
    head: HeadWeights

    def arrays(self) -> list:
        """Flat parameter list in a fixed order (layers by s then l, head)."""
        out = []
        for layer in self.layers:
            out.extend(layer)
        out.extend(self.head.arrays())
        return out


def init_weights(spec: NetworkSpec, n_out: int, hidden: int = 64,
                 seed: int = 0) -> NetworkWeights:
    """Random complex layer weights with E|w|^2 = 1/fan_in; real head weights
    with the same variance rule."""
    rng = np.random.default_rng(seed)
    layers = []
    for s in range(spec.n_layers):
        fan = spec.cg_input_type(s).tau
        tau = spec.layer_types[s].tau
        mats = []
        for ell in range(spec.bandlimit + 1):
            scale = 1.0 / np.sqrt(2.0 * max(fan[ell], 1))
            w = scale * (rng.standard_normal((fan[ell], tau[ell]))
                         + 1j * rng.standard_normal((fan[ell], tau[ell])))
            mats.append(w)
        layers.append(mats)
    d = spec.head_width()
    w1 = rng.standard_normal((d, hidden)) / np.sqrt(d)
    b1 = np.zeros(hidden)
    w2 = rng.standard_normal((hidden, n_out)) / np.sqrt(hidden)
    b2 = np.zeros(n_out)
    return NetworkWeights(spec, layers, HeadWeights(w1, b1, w2, b2))


# --- elementary adjoints ---

def backward_linear(G_bar: list, F: CovariantActivation, weights: list):
    """Adjoint of the per-degree mix G_l = F_l W_l.

    ``G_bar`` is a list of cotangent arrays matching the output fragments.
    Returns (F_bar fragments, W_bar list).
    """
    F_bar, W_bar = [], []
    for ell, (g, f, w) in enumerate(zip(G_bar, F.fragments, weights)):
        if w.shape != (f.shape[2], g.shape[2]):
            raise ValueError(f"adjoint shape mismatch at l={ell}")
        F_bar.append(g @ w.conj().T)
        W_bar.append(np.einsum("bmi,bmj->ij", f.conj(), g))
    return F_bar, W_bar


def backward_cg(H_bar: list, F: CovariantActivation, policy: str = "unordered",
                out_ell_max: int | None = None) -> list:
    """Adjoint of the CG nonlinearity; mirrors the forward concatenation
    order exactly.  Self-pairs accumulate both branch gradients."""
    L = F.bandlimit
    if out_ell_max is None:
        out_ell_max = L
    B = F.batch_size
    F_bar = [np.zeros_like(f) for f in F.fragments]
    offsets = [0] * (L + 1)
    for l1, l2 in cg_pairs(L, policy):
        F1, F2 = F.fragments[l1], F.fragments[l2]
        t1, t2 = F1.shape[2], F2.shape[2]
        if t1 == 0 or t2 == 0 or abs(l1 - l2) > out_ell_max:
            continue
        table = _pair_table(l1, l2, out_ell_max)
        if table.matrix is None:
            continue
        d1, d2 = 2 * l1 + 1, 2 * l2 + 1
        slabs = []
        for l in table.ells:
            o = offsets[l]
            blk = H_bar[l][:, :, o:o + t1 * t2]
            offsets[l] = o + t1 * t2
            slabs.append(blk.transpose(1, 0, 2).reshape(2 * l + 1, B * t1 * t2))
        y_bar = np.vstack(slabs)
        k_bar = (table.matrix @ y_bar).reshape(d1, d2, B, t1, t2)
        F_bar[l1] += np.einsum("mnbij,bnj->bmi", k_bar, F2.conj())
        F_bar[l2] += np.einsum("mnbij,bmi->bnj", k_bar, F1.conj())
    return F_bar


# --- tape-recorded network forward/backward ---

@dataclass
class ForwardTape:
    """Everything the backward pass needs from one forward evaluation."""

    input: CovariantActivation
    cg_inputs: list      # activation entering each layer's CG transform
    norm_denoms: list    # per layer: per-l denominators actually divided by
    normed: list         # post-CG, post-normalization activations
    outputs: list        # per-layer outputs
    features: np.ndarray
    hidden_pre: np.ndarray
    logits: np.ndarray


def forward_with_tape(coeffs: CovariantActivation, weights: NetworkWeights,
                      norm_states: list | None = None,
                      training: bool = False) -> ForwardTape:
    spec = weights.spec
    L = spec.bandlimit
    F = coeffs
    cg_inputs, norm_denoms, normed, outputs = [], [], [], []
    for s in range(spec.n_layers):
        out_max = 0 if s == spec.n_layers - 1 else L
        cg_inputs.append(F)
        H = cg_nonlinearity(F, spec.pair_policy, out_max)
        if norm_states is not None:
            H = covariant_normalize(H, norm_states[s], training)
            denoms = [np.where(s_l < NORM_EPS, 1.0, s_l)
                      for s_l in norm_states[s].scales]
        else:
            denoms = [np.ones(h.shape[2]) for h in H.fragments]
        norm_denoms.append(denoms)
        normed.append(H)
        F = CovariantActivation(
            L, [h @ w for h, w in zip(H.fragments, weights.layers[s])])
        outputs.append(F)
    feats = invariant_features(outputs, coeffs.fragments[0])
    hid_pre = feats @ weights.head.w1 + weights.head.b1
    logits = np.maximum(hid_pre, 0.0) @ weights.head.w2 + weights.head.b2
    return ForwardTape(coeffs, cg_inputs, norm_denoms, normed, outputs,
                       feats, hid_pre, logits)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _zero_like_weights(weights: NetworkWeights):
    layers = [[np.zeros_like(w) for w in layer] for layer in weights.layers]
    head = HeadWeights(*[np.zeros_like(a) for a in weights.head.arrays()])
    return layers, head


def loss_and_grad(coeffs: CovariantActivation, labels: np.ndarray,
                  weights: NetworkWeights, norm_states: list | None = None,
                  training: bool = False, l2: float = 0.0):
    """Mean softmax cross-entropy (+ optional L2 penalty) and its gradient
    with respect to every parameter.

    Returns (loss, NetworkWeights-shaped gradients, logits).
    """
    labels = np.asarray(labels)
    B = labels.shape[0]
    if B == 0:
        raise ValueError("batch must be non-empty")
    tape = forward_with_tape(coeffs, weights, norm_states, training)
    bad = np.where(~np.isfinite(tape.logits).all(axis=1))[0]
    if bad.size:
        raise NumericError(
            f"non-finite logits for example {bad[0]}", int(bad[0]))
    probs = _softmax(tape.logits)
    eps = 1e-300
    loss = -np.mean(np.log(probs[np.arange(B), labels] + eps))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss", None)

    spec = weights.spec
    g_layers, g_head = _zero_like_weights(weights)

    # head backward
    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    hid = np.maximum(tape.hidden_pre, 0.0)
    g_head.w2[:] = hid.T @ dlogits
    g_head.b2[:] = dlogits.sum(axis=0)
    dhid = (dlogits @ weights.head.w2.T) * (tape.hidden_pre > 0.0)
    g_head.w1[:] = tape.features.T @ dhid
    g_head.b1[:] = dhid.sum(axis=0)
    dfeats = dhid @ weights.head.w1.T

    # split the feature cotangent back into complex l=0 adjoints
    dcomplex = np.ascontiguousarray(dfeats).view(complex)  # (B, sum tau0 + n_in)
    col = 0
    head_adjoints = []
    for s in range(spec.n_layers):
        t0 = spec.layer_types[s].tau[0]
        head_adjoints.append(dcomplex[:, col:col + t0])
        col += t0
    # the input's own l=0 slice carries no trainable parameters

    # walk the layers backwards
    L = spec.bandlimit
    F_out_bar = None
    for s in range(spec.n_layers - 1, -1, -1):
        out_max = 0 if s == spec.n_layers - 1 else L
        G_bar = [np.zeros_like(f) for f in tape.outputs[s].fragments]
        if F_out_bar is not None:
            for ell in range(L + 1):
                G_bar[ell] += F_out_bar[ell]
        G_bar[0][:, 0, :] += head_adjoints[s]
        H_bar, W_bar = backward_linear(G_bar, tape.normed[s],
                                       weights.layers[s])
        for ell in range(L + 1):
            g_layers[s][ell][:] = W_bar[ell]
            H_bar[ell] = H_bar[ell] / tape.norm_denoms[s][ell][None, None, :]
        F_out_bar = backward_cg(H_bar, tape.cg_inputs[s], spec.pair_policy,
                                out_max)

    if l2:
        for layer, g_layer in zip(weights.layers, g_layers):
            for w, g in zip(layer, g_layer):
                loss += l2 * np.sum(np.abs(w) ** 2)
                g += 2.0 * l2 * w
        for w, g in zip(weights.head.arrays(), g_head.arrays()):
            loss += l2 * np.sum(w ** 2)
            g += 2.0 * l2 * w

    grads = NetworkWeights(spec, g_layers, g_head)
    return loss, grads, tape.logits
