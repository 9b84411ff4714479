"""Dense-tensor engine with reverse-mode differentiation.

Tensors hold float32 values shaped (channels, height, width) or flat; the
scalar loss node keeps its value in float64 (elementwise work stays float32,
the final reduction accumulates in double). Graphs are built define-by-run;
`backward` walks the tape once and refuses to run twice on the same loss.
Weights serialize to the LMW1 container, bit-exact on round trip.
"""

import struct

import numpy as np

from .errors import ConfigError, FormatError, NumericError, ShapeError, StateError

WEIGHTS_MAGIC = b"LMW1"


class Tensor:
    """A value node on the tape; may carry a gradient of the same shape."""

    __slots__ = ("values", "grad", "requires_grad", "name", "_parents",
                 "_grad_fn", "_consumed")

    def __init__(self, values, requires_grad=False, name=None):
        values = np.asarray(values)
        if values.ndim == 0:
            values = values.astype(np.float64)
        else:
            values = np.ascontiguousarray(values, dtype=np.float32)
        if not np.isfinite(values).all():
            raise NumericError(
                f"non-finite values in tensor{'' if name is None else ' ' + name}"
            )
        self.values = values
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._grad_fn = None
        self._consumed = False

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = None


def tensor(values, requires_grad=False):
    return Tensor(values, requires_grad=requires_grad)


def parameter(values, name):
    return Tensor(values, requires_grad=True, name=name)


def _node(values, parents, grad_fn):
    out = Tensor(values, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.values.dtype)
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def backward(loss):
    """Populate gradients of every tape node reachable from the scalar loss."""
    if loss.values.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise StateError("backward already ran for this loss; rebuild the graph")
    loss._consumed = True
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.values)
    for node in reversed(order):
        if node._grad_fn is not None:
            node._grad_fn(node.grad)


# ---------------------------------------------------------------------------
# convolution


def _check_conv_args(stride, padding):
    if stride < 1 or padding < 0:
        raise ShapeError(f"bad stride/padding ({stride}, {padding})")


def _pad_hw(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p)))


def _windows(padded, kh, kw, stride):
    win = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    return win[:, ::stride, ::stride]


def _patch_matrix(x, kh, kw, stride, padding):
    """Flatten sliding windows to (positions, Cin*kh*kw) for one matmul."""
    win = _windows(_pad_hw(x, padding), kh, kw, stride)
    _, ho, wo = win.shape[:3]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, -1)
    return np.ascontiguousarray(cols), ho, wo


def _conv_forward(x, k, stride, padding):
    o = k.shape[0]
    cols, ho, wo = _patch_matrix(x, k.shape[2], k.shape[3], stride, padding)
    return (cols @ k.reshape(o, -1).T).T.reshape(o, ho, wo)


def _conv_grad_kernel(x, dout, kshape, stride, padding):
    cols, ho, wo = _patch_matrix(x, kshape[2], kshape[3], stride, padding)
    return (dout.reshape(dout.shape[0], ho * wo) @ cols).reshape(kshape)


def _conv_scatter(dout, k, stride, padding, out_hw):
    """Adjoint of _conv_forward: scatter dout through the kernel taps."""
    _, ho, wo = dout.shape
    kh, kw = k.shape[2], k.shape[3]
    h, w = out_hw
    buf = np.zeros((k.shape[1], h + 2 * padding, w + 2 * padding), dtype=np.float32)
    for a in range(kh):
        rows = slice(a, a + stride * (ho - 1) + 1, stride)
        for b in range(kw):
            cols = slice(b, b + stride * (wo - 1) + 1, stride)
            buf[:, rows, cols] += np.tensordot(k[:, :, a, b], dout, axes=(0, 0))
    return buf[:, padding : padding + h, padding : padding + w]


def conv2d(x, k, stride=1, padding=0):
    """Cross-correlation of (Cin,H,W) with kernel (Cout,Cin,kh,kw)."""
    _check_conv_args(stride, padding)
    if x.values.ndim != 3 or k.values.ndim != 4:
        raise ShapeError(
            f"conv2d wants (C,H,W) and (O,I,kh,kw), got {x.shape} and {k.shape}"
        )
    if x.shape[0] != k.shape[1]:
        raise ShapeError(
            f"channel mismatch: input {x.shape[0]} vs kernel expects {k.shape[1]}"
        )
    kh, kw = k.shape[2], k.shape[3]
    if x.shape[1] + 2 * padding < kh or x.shape[2] + 2 * padding < kw:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {x.shape}")
    xin, kin = x.values, k.values
    in_hw = xin.shape[1:]

    def grad_fn(dout):
        _accum(x, _conv_scatter(dout, kin, stride, padding, in_hw))
        _accum(k, _conv_grad_kernel(xin, dout, kin.shape, stride, padding))

    return _node(_conv_forward(xin, kin, stride, padding), (x, k), grad_fn)


def conv_transpose2d(x, k, stride=1, padding=0):
    """Adjoint of conv2d with the same kernel: maps Cout back to Cin.

    Output spatial size is (in-1)*stride - 2*padding + kernel.
    """
    _check_conv_args(stride, padding)
    if x.values.ndim != 3 or k.values.ndim != 4:
        raise ShapeError(
            f"conv_transpose2d wants (C,H,W) and (O,I,kh,kw), "
            f"got {x.shape} and {k.shape}"
        )
    if x.shape[0] != k.shape[0]:
        raise ShapeError(
            f"channel mismatch: input {x.shape[0]} vs kernel expects {k.shape[0]}"
        )
    kh, kw = k.shape[2], k.shape[3]
    h = (x.shape[1] - 1) * stride - 2 * padding + kh
    w = (x.shape[2] - 1) * stride - 2 * padding + kw
    if h < 1 or w < 1:
        raise ShapeError(f"transposed output {h}x{w} is empty")
    xin, kin = x.values, k.values

    def grad_fn(dout):
        _accum(x, _conv_forward(dout, kin, stride, padding))
        _accum(k, _conv_grad_kernel(dout, xin, kin.shape, stride, padding))

    return _node(_conv_scatter(xin, kin, stride, padding, (h, w)), (x, k), grad_fn)


# ---------------------------------------------------------------------------
# elementwise and structural ops


def leaky_relu(x, slope=0.1):
    pos = x.values > 0.0

    def grad_fn(dout):
        _accum(x, np.where(pos, dout, np.float32(slope) * dout))

    vals = np.where(pos, x.values, np.float32(slope) * x.values)
    return _node(vals, (x,), grad_fn)


def sigmoid(x):
    v = x.values
    out = np.empty_like(v)
    pos = v >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)

    def grad_fn(dout):
        _accum(x, dout * out * (1.0 - out))

    return _node(out, (x,), grad_fn)


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch {a.shape} vs {b.shape}")

    def grad_fn(dout):
        _accum(a, dout)
        _accum(b, dout)

    return _node(a.values + b.values, (a, b), grad_fn)


def add_bias(x, b):
    """Add a per-channel bias (C,) to a (C,H,W) tensor."""
    if x.values.ndim != 3 or b.values.ndim != 1 or x.shape[0] != b.shape[0]:
        raise ShapeError(f"add_bias shapes {x.shape} and {b.shape} do not fit")

    def grad_fn(dout):
        _accum(x, dout)
        _accum(b, dout.sum(axis=(1, 2)))

    return _node(x.values + b.values[:, None, None], (x, b), grad_fn)


def affine_channels(x, scale, shift):
    """y = x * scale + shift with constant per-channel (C,) coefficients."""
    scale = np.asarray(scale, dtype=np.float32)
    shift = np.asarray(shift, dtype=np.float32)
    if x.values.ndim != 3 or scale.shape != (x.shape[0],) or shift.shape != scale.shape:
        raise ShapeError(
            f"affine_channels shapes {x.shape}, {scale.shape}, {shift.shape}"
        )

    def grad_fn(dout):
        _accum(x, dout * scale[:, None, None])

    vals = x.values * scale[:, None, None] + shift[:, None, None]
    return _node(vals, (x,), grad_fn)


def concat_channels(a, b):
    if a.values.ndim != 3 or b.values.ndim != 3 or a.shape[1:] != b.shape[1:]:
        raise ShapeError(f"concat_channels shapes {a.shape} vs {b.shape}")
    ca = a.shape[0]

    def grad_fn(dout):
        _accum(a, dout[:ca])
        _accum(b, dout[ca:])

    return _node(np.concatenate([a.values, b.values], axis=0), (a, b), grad_fn)


def avg_n(tensors):
    """Plain equal-weight average of same-shaped tensors."""
    if not tensors:
        raise ShapeError("avg_n needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"avg_n shape mismatch {t.shape} vs {shape}")
    n = len(tensors)
    inv = np.float32(1.0 / n) if tensors[0].values.ndim else 1.0 / n

    def grad_fn(dout):
        for t in tensors:
            _accum(t, dout * inv)

    # Accumulate in float64 so the mean does not depend on input order at
    # float32 resolution.
    vals = tensors[0].values.astype(np.float64)
    for t in tensors[1:]:
        vals = vals + t.values
    vals = (vals / n).astype(tensors[0].values.dtype)
    return _node(vals, tuple(tensors), grad_fn)


def l1_loss(pred, target):
    """Mean absolute error; the scalar accumulates in float64."""
    tgt = target.values if isinstance(target, Tensor) else np.asarray(
        target, dtype=np.float32
    )
    if pred.shape != tgt.shape:
        raise ShapeError(f"l1_loss shape mismatch {pred.shape} vs {tgt.shape}")
    diff = pred.values - tgt
    n = diff.size
    parents = (pred, target) if isinstance(target, Tensor) else (pred,)

    def grad_fn(dout):
        g = np.sign(diff) * np.float32(float(dout) / n)
        _accum(pred, g)
        if isinstance(target, Tensor):
            _accum(target, -g)

    return _node(np.abs(diff).astype(np.float64).mean(), parents, grad_fn)


# ---------------------------------------------------------------------------
# optimizer


class OptimizerState:
    """Momentum-SGD state with a log-space learning-rate schedule."""

    def __init__(self, params, total_epochs=50, momentum=0.95,
                 weight_decay=0.0005, log10_start=-3.0, log10_end=-5.0,
                 batch_size=4):
        self.velocities = [np.zeros_like(p.values) for p in params]
        self.total_epochs = int(total_epochs)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.log10_start = float(log10_start)
        self.log10_end = float(log10_end)
        self.batch_size = int(batch_size)
        if self.total_epochs < 1:
            raise ConfigError(f"schedule needs >= 1 epoch, got {total_epochs}")

    def learning_rate(self, t):
        if not 0 <= t < self.total_epochs:
            raise StateError(
                f"schedule exhausted: epoch {t} outside [0, {self.total_epochs})"
            )
        if self.total_epochs == 1:
            frac = 0.0
        else:
            frac = t / (self.total_epochs - 1)
        return 10.0 ** (self.log10_start + (self.log10_end - self.log10_start) * frac)


def sgd_step(params, grads, state, t):
    """v <- mu*v + (g + wd*p); p <- p - lr(t)*v, elementwise in float32."""
    if len(params) != len(grads) or len(params) != len(state.velocities):
        raise ShapeError(
            f"got {len(params)} params, {len(grads)} grads, "
            f"{len(state.velocities)} velocities"
        )
    lr = np.float32(state.learning_rate(t))
    mu = np.float32(state.momentum)
    wd = np.float32(state.weight_decay)
    for p, g, v in zip(params, grads, state.velocities):
        g = np.asarray(g, dtype=np.float32)
        if g.shape != p.values.shape or v.shape != p.values.shape:
            raise ShapeError(
                f"shape mismatch for {p.name}: param {p.values.shape}, "
                f"grad {g.shape}, velocity {v.shape}"
            )
        v *= mu
        v += g + wd * p.values
        p.values -= lr * v
    return params


# ---------------------------------------------------------------------------
# weights container


def save_weights(path, named):
    """Write name->float32-array pairs to the LMW1 container."""
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<I", len(named)))
        for name, arr in named.items():
            arr = np.asarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes(order="C"))


def load_weights(path):
    """Read an LMW1 container back into an ordered name->array dict."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, want {WEIGHTS_MAGIC!r}")
    off = 4

    def take(n, what):
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"{path}: truncated while reading {what}")
        chunk = data[off : off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4, "tensor count"))
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = tuple(
            struct.unpack("<I", take(4, "dimension"))[0] for _ in range(rank)
        )
        n_items = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(4 * n_items, f"payload of {name}")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    return out
