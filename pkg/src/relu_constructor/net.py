"""Explicit feedforward ReLU networks: evaluation, composition, accounting, I/O.

A network is a list of affine layers ``(W_i, b_i)``.  ReLU is applied after
every layer except the last, so a network with ``L`` layers has ``D = L - 1``
hidden layers.  Networks are immutable once built.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1


class NetworkFormatError(ValueError):
    """Raised when a serialized network payload cannot be parsed."""


@dataclass(frozen=True)
class NetworkStats:
    W: int
    D: int
    S: int
    U: int

    def as_dict(self) -> dict:
        return {"W": self.W, "D": self.D, "S": self.S, "U": self.U}


@dataclass(frozen=True, eq=False)
class Network:
    """Dense ReLU network ``L_D o sigma o ... o sigma o L_0``.

    Parameters
    ----------
    layers
        Sequence of ``(weight, bias)`` pairs; ``weight`` has shape ``(out, in)``.
    input_dim
        Dimension of the input vector.
    clip_bound
        Optional sup-norm cap applied to the output at evaluation time.
    """

    layers: tuple
    input_dim: int
    clip_bound: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        frozen = []
        prev = self.input_dim
        for i, (w, b) in enumerate(self.layers):
            w = np.array(w, dtype=np.float64, copy=True)
            b = np.array(b, dtype=np.float64, copy=True).reshape(-1)
            if w.ndim != 2:
                raise ValueError(f"layer {i}: weight must be 2-D")
            if w.shape[1] != prev:
                raise ValueError(f"layer {i}: expects input dim {w.shape[1]}, got {prev}")
            if b.shape[0] != w.shape[0]:
                raise ValueError(f"layer {i}: bias length {b.shape[0]} != rows {w.shape[0]}")
            w.setflags(write=False)
            b.setflags(write=False)
            frozen.append((w, b))
            prev = w.shape[0]
        object.__setattr__(self, "layers", tuple(frozen))
        if self.clip_bound is not None:
            if not (self.clip_bound >= 0 and math.isfinite(self.clip_bound)):
                raise ValueError("clip_bound must be a finite nonnegative real")
            object.__setattr__(self, "clip_bound", float(self.clip_bound))

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def widths(self) -> list[int]:
        return [w.shape[0] for w, _ in self.layers[:-1]]

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(net: Network, x) -> np.ndarray:
    """Evaluate ``net`` on one point (shape ``(d,)``) or a batch (shape ``(n, d)``)."""
    h = np.asarray(x, dtype=np.float64)
    single = h.ndim == 1
    if single:
        h = h[None, :]
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise ValueError(f"input has dimension {h.shape[-1]}, network expects {net.input_dim}")
    last = len(net.layers) - 1
    for i, (w, b) in enumerate(net.layers):
        h = h @ w.T + b
        if i < last:
            np.maximum(h, 0.0, out=h)
    if net.clip_bound is not None:
        np.clip(h, -net.clip_bound, net.clip_bound, out=h)
    return h[0] if single else h


def stats(net: Network) -> NetworkStats:
    hidden = net.widths
    S = sum(w.size + b.size for w, b in net.layers)
    W = max(hidden) if hidden else net.output_dim
    return NetworkStats(W=W, D=len(hidden), S=S, U=sum(hidden))


def rectangle_size(W: int, D: int, d: int, out: int = 1) -> int:
    """Parameter count of a fully connected net with ``D`` hidden layers of width ``W``."""
    if D == 0:
        return out * (d + 1)
    return W * (d + 1) + (W * W + W) * (D - 1) + out * (W + 1)


# --- elementary nets ---------------------------------------------------------

def linear(weight, bias=None, clip_bound=None) -> Network:
    weight = np.atleast_2d(np.asarray(weight, dtype=np.float64))
    if bias is None:
        bias = np.zeros(weight.shape[0])
    return Network(((weight, bias),), weight.shape[1], clip_bound)


def identity(d: int) -> Network:
    return linear(np.eye(d))


def constant(value: float, d: int) -> Network:
    return linear(np.zeros((1, d)), [value])


def relu_identity(d: int, depth: int) -> Network:
    """Identity on R^d realised with ``depth`` hidden layers of ``x = s(x) - s(-x)``."""
    if depth == 0:
        return identity(d)
    eye = np.eye(d)
    split = np.vstack([eye, -eye])
    layers = [(split, np.zeros(2 * d))]
    pair = np.eye(2 * d)
    for _ in range(depth - 1):
        layers.append((pair, np.zeros(2 * d)))
    layers.append((np.hstack([eye, -eye]), np.zeros(d)))
    return Network(tuple(layers), d)


# --- combinators ------------------------------------------------------------

def compose(outer: Network, inner: Network) -> Network:
    """Network for ``outer(inner(x))``.

    The inner readout and the outer first affine map merge into one layer, so
    the depth of the result is ``D_inner + D_outer``.  A clip bound on the
    inner network is not carried through; clip explicitly with :func:`clip`.
    """
    if outer.input_dim != inner.output_dim:
        raise ValueError(f"outer expects {outer.input_dim} inputs, inner yields {inner.output_dim}")
    wi, bi = inner.layers[-1]
    wo, bo = outer.layers[0]
    merged = (wo @ wi, wo @ bi + bo)
    layers = inner.layers[:-1] + (merged,) + outer.layers[1:]
    return Network(layers, inner.input_dim, outer.clip_bound)


def pad_depth(net: Network, depth: int) -> Network:
    """Extend ``net`` to ``depth`` hidden layers by carrying its output through identity pairs."""
    extra = depth - net.depth
    if extra < 0:
        raise ValueError("cannot reduce depth")
    if extra == 0:
        return net
    return compose(relu_identity(net.output_dim, extra), net)


def _block_diag(mats: Sequence[np.ndarray]) -> np.ndarray:
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def parallelize(nets: Sequence[Network]) -> Network:
    """Stack networks that read the same input; outputs are concatenated."""
    nets = list(nets)
    if not nets:
        raise ValueError("parallelize needs at least one network")
    d = nets[0].input_dim
    if any(n.input_dim != d for n in nets):
        raise ValueError("all networks must share input_dim")
    if len(nets) == 1:
        return nets[0]
    depth = max(n.depth for n in nets)
    nets = [pad_depth(n, depth) for n in nets]
    layers = [(np.vstack([n.layers[0][0] for n in nets]),
               np.concatenate([n.layers[0][1] for n in nets]))]
    for i in range(1, depth + 1):
        layers.append((_block_diag([n.layers[i][0] for n in nets]),
                       np.concatenate([n.layers[i][1] for n in nets])))
    return Network(tuple(layers), d)


def concat_inputs(nets: Sequence[Network]) -> Network:
    """Block-diagonal stack: network ``i`` reads its own slice of the input."""
    nets = list(nets)
    if not nets:
        raise ValueError("concat_inputs needs at least one network")
    depth = max(n.depth for n in nets)
    nets = [pad_depth(n, depth) for n in nets]
    layers = []
    for i in range(depth + 1):
        layers.append((_block_diag([n.layers[i][0] for n in nets]),
                       np.concatenate([n.layers[i][1] for n in nets])))
    return Network(tuple(layers), sum(n.input_dim for n in nets))


def clip(net: Network, B: float) -> Network:
    """Cap a scalar output at ``B`` using two extra hidden layers.

    ``max(t, -B) = s(t + B) - B`` and ``min(u, B) = B - s(B - u)`` are nested,
    one ReLU unit per layer.
    """
    if not B > 0:
        raise ValueError("clip bound must be positive")
    if net.output_dim != 1:
        raise ValueError("clip expects a scalar-output network")
    gate = Network((
        (np.array([[1.0]]), np.array([B])),
        (np.array([[-1.0]]), np.array([2.0 * B])),
        (np.array([[-1.0]]), np.array([B])),
    ), 1, clip_bound=B)
    return compose(gate, net)


def clip_one_layer(net: Network, B: float) -> Network:
    """Cap a scalar output at ``B`` with one hidden layer: s(t+B) - s(t-B) - B."""
    gate = Network((
        (np.array([[1.0], [1.0]]), np.array([B, -B])),
        (np.array([[1.0, -1.0]]), np.array([-B])),
    ), 1, clip_bound=B)
    return compose(gate, net)


def with_clip_bound(net: Network, B: float | None) -> Network:
    return Network(net.layers, net.input_dim, B, dict(net.meta))


# --- serialization ---------------------------------------------------------

def to_dict(net: Network) -> dict:
    return {
        "version": FORMAT_VERSION,
        "input_dim": net.input_dim,
        "clip_bound": net.clip_bound,
        "layers": [
            {"rows": int(w.shape[0]), "cols": int(w.shape[1]),
             "weights": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in net.layers
        ],
    }


def serialize(net: Network) -> bytes:
    for w, b in net.layers:
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("only finite coefficients can be serialized")
    return json.dumps(to_dict(net), separators=(",", ":")).encode("utf-8")


def from_dict(doc) -> Network:
    if not isinstance(doc, dict):
        raise NetworkFormatError("payload must be a JSON object")
    missing = {"version", "input_dim", "clip_bound", "layers"} - doc.keys()
    if missing:
        raise NetworkFormatError(f"missing fields: {sorted(missing)}")
    if doc["version"] != FORMAT_VERSION:
        raise NetworkFormatError(f"unsupported version {doc['version']!r}, expected {FORMAT_VERSION}")
    layers = doc["layers"]
    if not isinstance(layers, list) or not layers:
        raise NetworkFormatError("layers must be a nonempty list")
    parsed = []
    for i, layer in enumerate(layers):
        try:
            rows, cols = int(layer["rows"]), int(layer["cols"])
            w = np.array(layer["weights"], dtype=np.float64)
            b = np.array(layer["bias"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkFormatError(f"layer {i}: {exc}") from exc
        if rows < 1 or cols < 1 or w.shape != (rows * cols,) or b.shape != (rows,):
            raise NetworkFormatError(f"layer {i}: shape does not match rows={rows}, cols={cols}")
        parsed.append((w.reshape(rows, cols), b))
    try:
        return Network(tuple(parsed), int(doc["input_dim"]), doc["clip_bound"])
    except (ValueError, TypeError) as exc:
        raise NetworkFormatError(str(exc)) from exc


def deserialize(payload: bytes | str) -> Network:
    try:
        doc = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise NetworkFormatError(f"not valid JSON: {exc}") from exc
    return from_dict(doc)


def save(net: Network, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(net))


def load(path) -> Network:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
