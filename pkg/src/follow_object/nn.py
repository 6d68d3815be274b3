"""Dense ReLU networks with hand-written backprop and Adam.

Weights follow the ``(out, in)`` convention so a layer computes
``y = x @ W.T + b``. All arrays are float64. Inputs may be a single vector
or a batch with the leading axis as batch.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTIVATIONS = ("identity", "tanh")
_MAGIC = b"FOMLP001"


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    output_activation: str = "identity"
    # Only used by the tanh head: output = output_scale * tanh(z).
    output_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output layer")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        arrays = list(arrays)
        return cls(arrays[0::2], arrays[1::2])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases])


# Gradients share the parameter layout.
Gradients = MlpParams


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return cls(zeros, [z.copy() for z in zeros], 0, beta1, beta2, eps)


def init_params(spec: MlpSpec, rng: np.random.Generator, final_scale: float = 1.0) -> MlpParams:
    """Uniform fan-in init, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    weights, biases = [], []
    sizes = spec.layer_sizes
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        b = rng.uniform(-bound, bound, size=n_out)
        if i == len(sizes) - 2:
            w *= final_scale
            b *= final_scale
        weights.append(w)
        biases.append(b)
    return MlpParams(weights, biases)


def check_params(params: MlpParams, spec: MlpSpec) -> None:
    sizes = spec.layer_sizes
    if len(params.weights) != len(sizes) - 1:
        raise ShapeError(f"expected {len(sizes) - 1} layers, got {len(params.weights)}")
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        want = (sizes[i + 1], sizes[i])
        if w.shape != want or b.shape != (sizes[i + 1],):
            raise ShapeError(f"layer {i}: expected W{want}, b({sizes[i + 1]},), "
                             f"got W{w.shape}, b{b.shape}")


def _as_batch(x: np.ndarray, size: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != size:
        raise ShapeError(f"{what}: expected length {size}, got shape {x.shape}")
    return x, single


def forward_cache(params: MlpParams, spec: MlpSpec, x: np.ndarray):
    """Forward pass keeping every layer input (and the pre-activation of the head)."""
    h, single = _as_batch(x, spec.n_in, "input")
    inputs = []
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        h = np.maximum(z, 0.0) if i < n - 1 else z
    pre_out = h
    if spec.output_activation == "tanh":
        h = spec.output_scale * np.tanh(pre_out)
    return h, (inputs, pre_out, single)


def mlp_forward(params: MlpParams, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    out, (_, _, single) = forward_cache(params, spec, x)
    return out[0] if single else out


def mlp_backward(params: MlpParams, spec: MlpSpec, x: np.ndarray, upstream_grad: np.ndarray,
                 cache=None) -> tuple[Gradients, np.ndarray]:
    """Gradients of sum(<upstream_grad, output>) w.r.t. parameters and input.

    For batched input the gradient is summed over the batch; scale
    ``upstream_grad`` by 1/batch to get a mean.
    """
    if cache is None:
        out, cache = forward_cache(params, spec, x)
    else:
        out = None
    inputs, pre_out, single = cache
    g, _ = _as_batch(upstream_grad, spec.n_out, "upstream_grad")
    if g.shape[0] != inputs[0].shape[0]:
        raise ShapeError(f"upstream_grad batch {g.shape[0]} != input batch {inputs[0].shape[0]}")
    if spec.output_activation == "tanh":
        th = np.tanh(pre_out)
        g = g * spec.output_scale * (1.0 - th * th)
    n = len(params.weights)
    dws: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    dbs: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        h_in = inputs[i]
        dws[i] = g.T @ h_in
        dbs[i] = g.sum(axis=0)
        g = g @ params.weights[i]
        if i > 0:
            # inputs[i] is relu(z_{i-1}); its derivative is the positive mask
            g = g * (h_in > 0.0)
    return MlpParams(dws, dbs), (g[0] if single else g)


def adam_step(params: MlpParams, grads: Gradients, adam: AdamState, lr: float
              ) -> tuple[MlpParams, AdamState]:
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or len(p_arrays) != len(adam.m):
        raise ShapeError("params, grads and Adam state have different layer counts")
    for i, g in enumerate(g_arrays):
        if g.shape != p_arrays[i].shape:
            raise ShapeError(f"gradient {i} shape {g.shape} != param shape {p_arrays[i].shape}")
        if not np.all(np.isfinite(g)):
            kind = "weight" if i % 2 == 0 else "bias"
            raise FloatingPointError(f"non-finite gradient in layer {i // 2} {kind}")
    t = adam.t + 1
    b1, b2 = adam.beta1, adam.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, adam.m, adam.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + adam.eps))
        new_m.append(m)
        new_v.append(v)
    return MlpParams.from_arrays(new_p), AdamState(new_m, new_v, t, b1, b2, adam.eps)


def polyak(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    """target <- tau * online + (1 - tau) * target."""
    if tau == 1.0:
        return online.copy()
    if tau == 0.0:
        return target.copy()
    return MlpParams.from_arrays(tau * o + (1.0 - tau) * t
                                 for t, o in zip(target.arrays(), online.arrays()))


# Checkpoint layout (little endian):
#   8s   magic "FOMLP001"
#   u32  number of layer sizes L, then L x u32 sizes
#   u8   output activation index into ACTIVATIONS
#   f64  output scale
#   per layer: W as (out, in) row-major f64, then b as f64
def dumps(params: MlpParams, spec: MlpSpec) -> bytes:
    check_params(params, spec)
    sizes = spec.layer_sizes
    head = struct.pack(f"<8sI{len(sizes)}IBd", _MAGIC, len(sizes), *sizes,
                       ACTIVATIONS.index(spec.output_activation), spec.output_scale)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    return head + body


def loads(blob: bytes) -> tuple[MlpParams, MlpSpec]:
    if blob[:8] != _MAGIC:
        raise ValueError("not an MLP checkpoint (bad magic)")
    (n,) = struct.unpack_from("<I", blob, 8)
    off = 12
    sizes = struct.unpack_from(f"<{n}I", blob, off)
    off += 4 * n
    act, scale = struct.unpack_from("<Bd", blob, off)
    off += struct.calcsize("<Bd")
    spec = MlpSpec(sizes, ACTIVATIONS[act], scale)
    arrays = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        for shape in ((n_out, n_in), (n_out,)):
            count = int(np.prod(shape))
            a = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
            arrays.append(a.astype(np.float64))
            off += 8 * count
    if off != len(blob):
        raise ValueError(f"trailing bytes in checkpoint ({len(blob) - off})")
    return MlpParams.from_arrays(arrays), spec


def save(path: str | Path, params: MlpParams, spec: MlpSpec) -> None:
    Path(path).write_bytes(dumps(params, spec))


def load(path: str | Path) -> tuple[MlpParams, MlpSpec]:
    return loads(Path(path).read_bytes())
