"""ADAM optimizer, training loop and checkpoint serialization.

Checkpoints are directories: a structured-text ``model.manifest`` plus
binary blobs (``weights.bin``, ``norm.bin``, ``adam.bin``).  Complex
matrices are stored as little-endian float64 real/imag pairs; the array
order is documented in the manifest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gradients import HeadWeights, NetworkWeights, loss_and_grad
from .network import ActivationType, CovariantActivation, NetworkSpec, NormState


@dataclass
class AdamState:
    """Per-parameter first/second moments plus hyperparameters.

    Complex parameters are optimized as real/imag pairs: moments track the
    float64 view of each array.
    """

    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_weights(cls, weights: NetworkWeights, **hyper) -> "AdamState":
        state = cls(**hyper)
        for arr in weights.arrays():
            f = arr.view(float) if np.iscomplexobj(arr) else arr
            state.m.append(np.zeros_like(f))
            state.v.append(np.zeros_like(f))
        return state


def adam_step(state: AdamState, weights: NetworkWeights,
              grads: NetworkWeights) -> None:
    """One ADAM update with bias correction and decoupled L2 decay, in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for arr, g, m, v in zip(weights.arrays(), grads.arrays(),
                            state.m, state.v):
        f = arr.view(float) if np.iscomplexobj(arr) else arr
        gf = g.view(float) if np.iscomplexobj(g) else g
        m *= state.beta1
        m += (1.0 - state.beta1) * gf
        v *= state.beta2
        v += (1.0 - state.beta2) * gf * gf
        if state.weight_decay:
            f -= state.lr * state.weight_decay * f
        f -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def make_norm_states(spec: NetworkSpec) -> list:
    return [NormState.for_type(spec.cg_input_type(s))
            for s in range(spec.n_layers)]


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def train_loop(coeffs: CovariantActivation, labels: np.ndarray,
               weights: NetworkWeights, norm_states: list, adam: AdamState,
               steps: int, batch_size: int, seed: int = 0,
               log_file=None, l2: float = 0.0) -> list:
    """Minibatch training; deterministic for a fixed seed and data order.

    Weight decay is applied by the optimizer; ``l2`` optionally adds an
    explicit penalty to the reported loss as well.  Returns the per-step
    (loss, accuracy) history and writes one tab-separated log line per step:
    ``step  loss  train_acc  lr  wall_ms``.
    """
    rng = np.random.default_rng(seed)
    n = labels.shape[0]
    history = []
    for _ in range(steps):
        t0 = time.perf_counter()
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        batch = CovariantActivation(
            coeffs.bandlimit, [f[idx] for f in coeffs.fragments])
        loss, grads, logits = loss_and_grad(
            batch, labels[idx], weights, norm_states, training=True, l2=l2)
        adam_step(adam, weights, grads)
        acc = accuracy(logits, labels[idx])
        history.append((loss, acc))
        if log_file is not None:
            wall_ms = (time.perf_counter() - t0) * 1e3
            log_file.write(
                f"{adam.step}\t{loss:.6f}\t{acc:.4f}\t{adam.lr:.6g}\t"
                f"{wall_ms:.1f}\n")
    return history


# --- checkpoint serialization ---

_BLOB_DOC = ("layer weights by layer then degree as complex128 "
             "(little-endian float64 re/im pairs), then head w1, b1, w2, b2 "
             "as float64")


def save_checkpoint(path, weights: NetworkWeights, norm_states: list,
                    adam: AdamState | None = None, n_out: int | None = None,
                    extra: dict | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    spec = weights.spec
    if n_out is None:
        n_out = weights.head.b2.shape[0]
    lines = [
        "format=CGNET1",
        f"bandlimit={spec.bandlimit}",
        f"layers={spec.n_layers}",
        f"n_in={spec.n_in}",
        f"pair_policy={spec.pair_policy}",
        f"n_out={n_out}",
        f"hidden={weights.head.b1.shape[0]}",
        f"head_width={spec.head_width()}",
        f"blob_order={_BLOB_DOC}",
    ]
    for s, tau in enumerate(spec.layer_types):
        lines.append(f"tau{s + 1}=" + ",".join(str(t) for t in tau.tau))
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    (path / "model.manifest").write_text("\n".join(lines) + "\n")

    with open(path / "weights.bin", "wb") as fh:
        for layer in weights.layers:
            for w in layer:
                fh.write(np.ascontiguousarray(w, dtype="<c16").tobytes())
        for arr in weights.head.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    with open(path / "norm.bin", "wb") as fh:
        counts = np.array([ns.count for ns in norm_states], dtype="<i8")
        fh.write(counts.tobytes())
        for ns in norm_states:
            for scale in ns.scales:
                fh.write(np.ascontiguousarray(scale, dtype="<f8").tobytes())

    if adam is not None:
        with open(path / "adam.bin", "wb") as fh:
            header = np.array([adam.step], dtype="<i8")
            hyper = np.array([adam.lr, adam.beta1, adam.beta2, adam.eps,
                              adam.weight_decay], dtype="<f8")
            fh.write(header.tobytes())
            fh.write(hyper.tobytes())
            for m, v in zip(adam.m, adam.v):
                fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def _parse_manifest(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key] = value
    return out


def load_checkpoint(path):
    """Load (weights, norm_states, adam_or_None, manifest_dict)."""
    path = Path(path)
    manifest = _parse_manifest((path / "model.manifest").read_text())
    if manifest.get("format") != "CGNET1":
        raise ValueError(f"unsupported checkpoint format in {path}")
    L = int(manifest["bandlimit"])
    S = int(manifest["layers"])
    n_in = int(manifest["n_in"])
    n_out = int(manifest["n_out"])
    hidden = int(manifest["hidden"])
    taus = tuple(
        ActivationType(tuple(int(t) for t in manifest[f"tau{s + 1}"].split(",")))
        for s in range(S))
    spec = NetworkSpec(L, n_in, taus, manifest.get("pair_policy", "unordered"))

    blob = (path / "weights.bin").read_bytes()
    n_complex = sum(spec.cg_input_type(s).tau[ell] * taus[s].tau[ell]
                    for s in range(S) for ell in range(L + 1))
    raw = np.frombuffer(blob[:16 * n_complex], dtype="<c16")
    pos = 0
    layers = []
    for s in range(S):
        fan = spec.cg_input_type(s).tau
        mats = []
        for ell in range(L + 1):
            n = fan[ell] * taus[s].tau[ell]
            mats.append(raw[pos:pos + n].reshape(fan[ell], taus[s].tau[ell]).copy())
            pos += n
        layers.append(mats)
    head_raw = np.frombuffer(blob[16 * n_complex:], dtype="<f8")
    d = spec.head_width()
    shapes = [(d, hidden), (hidden,), (hidden, n_out), (n_out,)]
    head_arrays, hpos = [], 0
    for shape in shapes:
        n = int(np.prod(shape))
        head_arrays.append(head_raw[hpos:hpos + n].reshape(shape).copy())
        hpos += n
    weights = NetworkWeights(spec, layers, HeadWeights(*head_arrays))

    norm_raw = (path / "norm.bin").read_bytes()
    counts = np.frombuffer(norm_raw[:8 * S], dtype="<i8")
    scales_flat = np.frombuffer(norm_raw[8 * S:], dtype="<f8")
    norm_states, pos = [], 0
    for s in range(S):
        tau_bar = spec.cg_input_type(s).tau
        scales = []
        for t in tau_bar:
            scales.append(scales_flat[pos:pos + t].copy())
            pos += t
        norm_states.append(NormState(scales, int(counts[s])))

    adam = None
    adam_path = path / "adam.bin"
    if adam_path.exists():
        raw = adam_path.read_bytes()
        step = int(np.frombuffer(raw[:8], dtype="<i8")[0])
        lr, b1, b2, eps, wd = np.frombuffer(raw[8:48], dtype="<f8")
        adam = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps,
                         weight_decay=wd, step=step)
        flat = np.frombuffer(raw[48:], dtype="<f8")
        pos = 0
        for arr in weights.arrays():
            f = arr.view(float) if np.iscomplexobj(arr) else arr
            adam.m.append(flat[pos:pos + f.size].reshape(f.shape).copy())
            pos += f.size
            adam.v.append(flat[pos:pos + f.size].reshape(f.shape).copy())
            pos += f.size
    return weights, norm_states, adam, manifest
