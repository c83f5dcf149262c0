"""Neural building blocks: parameter sets, MLPs, an LSTM cell, node/edge
message passing, the Adam optimizer, and the binary checkpoint format.

All trainable state lives in `ParameterSet`s of requires-grad tensors;
forward functions are plain functions over those sets so that snapshots
and target copies are cheap.
"""

import json

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_MAGIC = b"SSMCKPT1\n"


class ParameterSet:
    """Ordered, uniquely named collection of trainable tensors."""

    def __init__(self):
        self._entries = {}

    def add(self, name, value):
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value, requires_grad=True)
        t.requires_grad = True
        self._entries[name] = t
        return t

    def __getitem__(self, name):
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def tensors(self):
        return list(self._entries.values())

    @property
    def n_params(self):
        return int(sum(t.size for t in self._entries.values()))

    def zero_grad(self):
        for t in self._entries.values():
            t.grad = None

    def copy(self):
        """Deep copy with fresh tensors (used for target networks)."""
        out = ParameterSet()
        for name, t in self._entries.items():
            out.add(name, np.array(t.data, copy=True))
        return out

    def load_arrays(self, arrays):
        """Overwrite parameter values in place from {name: ndarray}."""
        for name, t in self._entries.items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name!r}")
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: "
                                 f"{src.shape} vs {t.data.shape}")
            t.data = src.copy()


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# MLP

_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu, "sigmoid": ad.sigmoid}


def init_mlp(rng, sizes, params=None, prefix=""):
    """Create W{i}/b{i} entries for an affine stack with the given sizes."""
    params = params if params is not None else ParameterSet()
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params.add(f"{prefix}W{i}", uniform_init(rng, (n_in, n_out), n_in))
        params.add(f"{prefix}b{i}", uniform_init(rng, (n_out,), n_in))
    return params


def mlp_forward(params, x, activation="tanh", output_activation=None, prefix=""):
    """Affine-activation stack; the output layer is linear unless
    `output_activation` is given. x is [batch, in]."""
    act = _ACTIVATIONS[activation]
    i = 0
    h = x
    while f"{prefix}W{i}" in params:
        w, b = params[f"{prefix}W{i}"], params[f"{prefix}b{i}"]
        if h.shape[-1] != w.shape[0]:
            raise ValueError(f"mlp layer {i}: input width {h.shape[-1]} "
                             f"does not match weight {w.shape}")
        h = ad.affine(h, w, b)
        i += 1
        if f"{prefix}W{i}" in params:
            h = act(h)
    if output_activation is not None:
        h = _ACTIVATIONS[output_activation](h)
    return h


class MLP:
    """Convenience wrapper pairing a ParameterSet with its layer sizes."""

    def __init__(self, rng, sizes, activation="tanh", output_activation=None):
        self.sizes = list(sizes)
        self.activation = activation
        self.output_activation = output_activation
        self.params = init_mlp(rng, sizes)

    def __call__(self, x):
        return mlp_forward(self.params, x, self.activation, self.output_activation)


# ---------------------------------------------------------------------------
# LSTM cell

def init_lstm(rng, in_dim, hidden, params=None, prefix=""):
    """LSTM cell weights; gate order is (input, forget, cell, output).
    The forget-gate bias starts at +1."""
    params = params if params is not None else ParameterSet()
    params.add(f"{prefix}Wx", uniform_init(rng, (in_dim, 4 * hidden), in_dim))
    params.add(f"{prefix}Wh", uniform_init(rng, (hidden, 4 * hidden), hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    params.add(f"{prefix}b", b)
    return params


def lstm_step(params, x, h, c, prefix=""):
    """One LSTM cell update; returns (h', c'). x is [batch, in],
    h and c are [batch, hidden]."""
    wx, wh, b = params[f"{prefix}Wx"], params[f"{prefix}Wh"], params[f"{prefix}b"]
    if x.shape[-1] != wx.shape[0] or h.shape[-1] != wh.shape[0]:
        raise ValueError(f"lstm widths mismatch: x {x.shape}, h {h.shape}, "
                         f"Wx {wx.shape}, Wh {wh.shape}")
    hidden = wh.shape[0]
    z = ad.affine(x, wx, b) + ad.matmul(h, wh)
    gi = ad.sigmoid(ad.narrow(z, 1, 0, hidden))
    gf = ad.sigmoid(ad.narrow(z, 1, hidden, hidden))
    gc = ad.tanh(ad.narrow(z, 1, 2 * hidden, hidden))
    go = ad.sigmoid(ad.narrow(z, 1, 3 * hidden, hidden))
    c_new = gf * c + gi * gc
    h_new = go * ad.tanh(c_new)
    return h_new, c_new


# ---------------------------------------------------------------------------
# Message passing over the fully connected agent graph

def _as_batched(x):
    """Promote [N, d] to [1, N, d]; report whether a batch axis was added."""
    if x.ndim == 2:
        return ad.reshape(x, (1,) + x.shape), True
    return x, False


def offdiag_mask(n):
    """[1, n, n, 1] mask that zeroes self-pairs."""
    return (1.0 - np.eye(n))[None, :, :, None]


def node_to_edge(f_e, h_nodes, edge_feats=None):
    """Per ordered pair (i, j): f_e(concat(h_i, h_j, edge_feats_ij)).

    h_nodes is [N, d] or [B, N, d]; returns [.., N, N, d_out]. Entries on
    the diagonal are computed too; downstream aggregation masks them out.
    """
    h, squeezed = _as_batched(h_nodes)
    b, n, d = h.shape
    if n < 2:
        raise ValueError(f"node_to_edge requires at least 2 nodes, got {n}")
    hi = ad.broadcast_to(ad.reshape(h, (b, n, 1, d)), (b, n, n, d))
    hj = ad.broadcast_to(ad.reshape(h, (b, 1, n, d)), (b, n, n, d))
    parts = [hi, hj]
    if edge_feats is not None:
        ef, _ = (edge_feats, False) if edge_feats.ndim == 4 else \
            (ad.reshape(edge_feats, (1,) + edge_feats.shape), True)
        parts.append(ef)
    pair_in = ad.concat(parts, axis=3)
    width = pair_in.shape[-1]
    flat = ad.reshape(pair_in, (b * n * n, width))
    out = mlp_forward(f_e, flat)
    out = ad.reshape(out, (b, n, n, out.shape[-1]))
    return ad.reshape(out, out.shape[1:]) if squeezed else out


def edge_to_node(f_v, h_edges, node_feats=None):
    """Per node j: f_v(concat(sum over incoming edges i != j, node_feats_j)).

    h_edges is [N, N, d] or [B, N, N, d] with [i, j] the edge from i to j.
    """
    e = h_edges
    squeezed = False
    if e.ndim == 3:
        e = ad.reshape(e, (1,) + e.shape)
        squeezed = True
    b, n, _, d = e.shape
    masked = e * offdiag_mask(n)
    agg = ad.sum_(masked, axis=1)  # sum over senders i, [B, N, d]
    if node_feats is not None:
        nf = node_feats if node_feats.ndim == 3 else ad.reshape(node_feats, (1,) + node_feats.shape)
        agg = ad.concat([agg, nf], axis=2)
    flat = ad.reshape(agg, (b * n, agg.shape[-1]))
    out = mlp_forward(f_v, flat)
    out = ad.reshape(out, (b, n, out.shape[-1]))
    return ad.reshape(out, out.shape[1:]) if squeezed else out


# ---------------------------------------------------------------------------
# Adam

class AdamState:
    """Per-parameter moment estimates plus shared step counter."""

    def __init__(self, params, learning_rate=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}


def adam_step(state, params):
    """One Adam update with bias correction; gradients are zeroed after."""
    for name, t in params.items():
        if t.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, t in params.items():
        g = t.grad
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
        t.grad = None


# ---------------------------------------------------------------------------
# Checkpoints
#
# Single file: magic, one JSON manifest line listing (name, shape) in order
# plus free-form metadata, then the flat little-endian float64 arrays
# concatenated in manifest order.

def save_checkpoint(path, named_sets, extra_arrays=None, meta=None):
    """Write ParameterSets (namespaced `set/param`) and extra arrays."""
    entries = []
    blobs = []
    for set_name, pset in named_sets.items():
        for pname, t in pset.items():
            entries.append({"name": f"{set_name}/{pname}", "shape": list(t.data.shape)})
            blobs.append(np.ascontiguousarray(t.data, dtype="<f8"))
    for name, arr in (extra_arrays or {}).items():
        arr = np.asarray(arr, dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype="<f8"))
    manifest = json.dumps({"meta": meta or {}, "entries": entries},
                          sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(manifest.encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob.tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (meta dict, {name: float64 array})."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        manifest = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for entry in manifest["entries"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"checkpoint truncated at {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return manifest["meta"], arrays


def arrays_for_set(arrays, set_name):
    """Select `set/param` entries for one set, stripping the prefix."""
    prefix = set_name + "/"
    return {name[len(prefix):]: arr for name, arr in arrays.items()
            if name.startswith(prefix)}
