"""Feed-forward embedding network with a weight-normalized cosine head.

The forward pass maps inputs through dense layers to an embedding ``e``,
normalizes it to ``f = e / |e|`` and returns the cosines ``f . W_i / |W_i|``
against every head row. Head rows are kept unnormalized and normalized on
the fly, so optimizer updates are unconstrained.

Checkpoint byte layout (all integers little-endian)::

    bytes 0..7    magic b"UIRCKPT\\x00"
    bytes 8..11   uint32 format version (currently 1)
    bytes 12..15  uint32 length L of the JSON header
    next L bytes  UTF-8 JSON: layer dims and activations, d_embed, n_known,
                  training phase tag, config snapshot
    remainder     float64 little-endian arrays in declaration order:
                  for each layer its weight (out x in, row-major) then bias,
                  then the head (n_known x d_embed, row-major)
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import NORM_EPS, DimensionError

ACTIVATIONS = ("relu", "none")
CHECKPOINT_MAGIC = b"UIRCKPT\x00"
CHECKPOINT_VERSION = 1
PHASES = ("init", "supervised", "semisupervised")


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written with an unsupported format version."""


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError("layer weight/bias shapes do not agree")


@dataclass
class EmbeddingModel:
    layers: list
    head: np.ndarray  # (n_known, d_embed)

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise DimensionError("layer dimensions do not chain")
        if self.head.ndim != 2 or self.head.shape[1] != self.d_embed:
            raise DimensionError("head columns must equal the embedding dimension")

    @property
    def d_input(self):
        return self.layers[0].weight.shape[1]

    @property
    def d_embed(self):
        return self.layers[-1].weight.shape[0]

    @property
    def n_known(self):
        return self.head.shape[0]

    def parameters(self):
        """Parameter arrays in declaration order (views, not copies)."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        out.append(self.head)
        return out

    def copy(self):
        return EmbeddingModel(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            self.head.copy(),
        )


def init_model(d_input, n_known, hidden=(64, 64), d_embed=64, seed=0):
    """Glorot-uniform dense layers and a head of normalized Gaussian rows."""
    rng = np.random.default_rng(seed)
    dims = [d_input, *hidden, d_embed]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = "none" if i == len(dims) - 2 else "relu"
        layers.append(Layer(w, np.zeros(fan_out), act))
    head = rng.standard_normal((n_known, d_embed))
    head /= np.linalg.norm(head, axis=1, keepdims=True)
    return EmbeddingModel(layers, head)


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, for a batch of rows.

    ``valid`` marks rows whose embedding norm exceeded ``NORM_EPS``; the
    normalized feature and cosines of invalid rows are zero.
    """

    inputs: np.ndarray
    pre_activations: list
    activations: list
    embedding: np.ndarray
    embedding_norm: np.ndarray
    features: np.ndarray
    head_unit: np.ndarray
    head_norm: np.ndarray
    cosines: np.ndarray
    valid: np.ndarray = field(default=None)

    @property
    def n_skipped(self):
        return int(np.count_nonzero(~self.valid))


def forward(model, inputs):
    """Run the network on one input vector or a batch of rows.

    A 1-D input yields a trace whose arrays still carry a leading batch
    axis of length one.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.d_input:
        raise DimensionError(
            f"input dim {x.shape[-1]} does not match model input dim {model.d_input}"
        )
    pre, acts = [], []
    h = x
    for layer in model.layers:
        z = h @ layer.weight.T + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(h)
    e = h
    e_norm = np.linalg.norm(e, axis=1)
    valid = e_norm > NORM_EPS
    safe = np.where(valid, e_norm, 1.0)
    f = np.where(valid[:, None], e / safe[:, None], 0.0)
    w_norm = np.linalg.norm(model.head, axis=1)
    if np.any(w_norm <= NORM_EPS):
        raise DimensionError("head has a zero row")
    w_unit = model.head / w_norm[:, None]
    cos = f @ w_unit.T
    return ForwardTrace(x, pre, acts, e, e_norm, f, w_unit, w_norm, cos, valid)


def head_logits(trace, s=64.0):
    """Margin-free scaled cosines."""
    return s * trace.cosines


def backward(model, trace, grad_logits, s=1.0):
    """Gradients of a scalar loss w.r.t. every parameter.

    ``grad_logits`` is dL/dlogits for logits ``s * cosines`` (the output of
    :func:`head_logits`), shaped like ``trace.cosines``. Gradients that
    already live in cosine space, such as the output of
    ``losses.batch_arcface_backward``, are passed with ``s=1``. Returns a
    list aligned with :meth:`EmbeddingModel.parameters`.
    """
    g = s * np.asarray(grad_logits, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != trace.cosines.shape:
        raise DimensionError(
            f"gradient shape {g.shape} does not match cosines {trace.cosines.shape}"
        )
    g = np.where(trace.valid[:, None], g, 0.0)

    f = trace.features
    # cos = f @ w_unit.T
    grad_f = g @ trace.head_unit
    grad_w_unit = g.T @ f
    # unit-vector projections (I - u u^T) / |x|
    grad_head = (
        grad_w_unit - np.sum(grad_w_unit * trace.head_unit, axis=1, keepdims=True) * trace.head_unit
    ) / trace.head_norm[:, None]
    safe = np.where(trace.valid, trace.embedding_norm, 1.0)
    grad_h = (grad_f - np.sum(grad_f * f, axis=1, keepdims=True) * f) / safe[:, None]

    grads = []
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.activation == "relu":
            grad_h = grad_h * (trace.pre_activations[i] > 0)
        h_prev = trace.activations[i - 1] if i > 0 else trace.inputs
        grads.append(grad_h.sum(axis=0))
        grads.append(grad_h.T @ h_prev)
        if i > 0:
            grad_h = grad_h @ layer.weight
    grads.reverse()
    grads.append(grad_head)
    return grads


def flatten(arrays):
    return np.concatenate([np.ravel(a) for a in arrays])


def unflatten_into(model, flat):
    """Write a flat parameter vector back into ``model`` in place."""
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != sum(p.size for p in model.parameters()):
        raise DimensionError("flat parameter vector has the wrong length")
    pos = 0
    for p in model.parameters():
        p[...] = flat[pos:pos + p.size].reshape(p.shape)
        pos += p.size


def save_checkpoint(model, path, phase="init", config=None):
    """Write ``model`` in the binary checkpoint format described above."""
    data = checkpoint_bytes(model, phase, config)
    with open(path, "wb") as fh:
        fh.write(data)


def checkpoint_bytes(model, phase="init", config=None):
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    header = {
        "layers": [
            {"in": l.weight.shape[1], "out": l.weight.shape[0], "activation": l.activation}
            for l in model.layers
        ],
        "d_embed": model.d_embed,
        "n_known": model.n_known,
        "phase": phase,
        "config": config or {},
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.parameters())
    return CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(hdr)) + hdr + body


def load_checkpoint(path):
    """Read a checkpoint; returns ``(model, header)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_checkpoint(data)


def parse_checkpoint(data):
    if len(data) < 16 or data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic or too short)")
    version, hdr_len = struct.unpack("<II", data[8:16])
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )
    if len(data) < 16 + hdr_len:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(data[16:16 + hdr_len].decode("utf-8"))
        shapes = []
        for entry in header["layers"]:
            shapes += [(entry["out"], entry["in"]), (entry["out"],)]
        shapes.append((header["n_known"], header["d_embed"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    body = data[16 + hdr_len:]
    expected = 8 * sum(int(np.prod(s)) for s in shapes)
    if len(body) != expected:
        raise CheckpointError(
            f"checkpoint body has {len(body)} bytes, expected {expected}"
        )
    arrays, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(np.frombuffer(body, dtype="<f8", count=size, offset=pos).astype(np.float64).reshape(shape))
        pos += 8 * size
    layers = [
        Layer(arrays[2 * i], arrays[2 * i + 1], entry["activation"])
        for i, entry in enumerate(header["layers"])
    ]
    return EmbeddingModel(layers, arrays[-1]), header
