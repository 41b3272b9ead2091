"""Deterministic numpy evaluator for the ONNX operator subset we consume.

Covers the ops emitted for frozen image encoders (convolutional backbones
and vision transformers) plus the handful of shape-plumbing ops around
them. Arithmetic stays in the tensor dtype (float32 graphs run in float32)
and every op is a pure numpy expression, so identical inputs give
bit-identical outputs on a given platform.

Graphs must list nodes in topological order, which every exporter this
pipeline supports does.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .onnx_format import _ONNX_TO_DTYPE, OnnxModel


class UnsupportedOperatorError(DataError):
    """Graph uses an operator outside the supported subset."""


class GraphExecutionError(DataError):
    """Graph is structurally invalid (missing tensors, bad shapes)."""


def _pair(value, default):
    if value is None:
        return list(default)
    return [int(v) for v in value]


def _conv2d(x, w, b, strides, pads):
    n, c, h, width = x.shape
    m, cw, kh, kw = w.shape
    if cw != c:
        raise GraphExecutionError(f"conv channel mismatch: input {c}, weight {cw}")
    sh, sw = strides
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    out_h = (h + pt + pb - kh) // sh + 1
    out_w = (width + pl + pr - kw) // sw + 1
    st = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, out_h, out_w, kh, kw),
        strides=(st[0], st[1], st[2] * sh, st[3] * sw, st[2], st[3]),
        writeable=False,
    )
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * out_h * out_w, c * kh * kw)
    out = cols @ w.reshape(m, -1).T
    if b is not None:
        out = out + b
    return np.ascontiguousarray(out.reshape(n, out_h, out_w, m).transpose(0, 3, 1, 2))


def _maxpool2d(x, kernel, strides, pads):
    n, c, h, w = x.shape
    kh, kw = kernel
    sh, sw = strides
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=-np.inf)
    out_h = (h + pt + pb - kh) // sh + 1
    out_w = (w + pl + pr - kw) // sw + 1
    st = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, out_h, out_w, kh, kw),
        strides=(st[0], st[1], st[2] * sh, st[3] * sw, st[2], st[3]),
        writeable=False,
    )
    return windows.max(axis=(4, 5)).astype(x.dtype)


def _softmax(x, axis):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _reshape(x, shape):
    target = []
    for i, dim in enumerate(int(v) for v in shape):
        if dim == 0:
            target.append(x.shape[i])
        else:
            target.append(dim)
    return x.reshape(target)


def _param_shape(param, x):
    # scale/mean/var vectors broadcast along the channel axis of NCHW-ish inputs
    return (1, param.shape[0]) + (1,) * (x.ndim - 2)


class GraphExecutor:
    """Run a parsed :class:`OnnxModel` on named numpy feeds."""

    def __init__(self, model: OnnxModel):
        self.model = model
        unsupported = sorted(
            {node.op_type for node in model.nodes if node.op_type not in _OP_TABLE}
        )
        if unsupported:
            raise UnsupportedOperatorError(
                f"graph uses unsupported operators: {', '.join(unsupported)} "
                f"(supported: {', '.join(sorted(_OP_TABLE))})"
            )

    def run(self, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        env: dict[str, np.ndarray] = dict(self.model.initializers)
        env.update(feeds)
        for node in self.model.nodes:
            args = []
            for name in node.inputs:
                if name == "":
                    args.append(None)
                elif name in env:
                    args.append(env[name])
                else:
                    raise GraphExecutionError(
                        f"node {node.op_type} needs tensor {name!r} before it is produced"
                    )
            results = _OP_TABLE[node.op_type](node, args)
            if not isinstance(results, tuple):
                results = (results,)
            for out_name, value in zip(node.outputs, results):
                if out_name:
                    env[out_name] = value
        missing = [o.name for o in self.model.outputs if o.name not in env]
        if missing:
            raise GraphExecutionError(f"graph never produced outputs: {missing}")
        return {o.name: env[o.name] for o in self.model.outputs}


# ---------------------------------------------------------------------------
# op implementations
# ---------------------------------------------------------------------------

def _op_conv(node, args):
    x, w = args[0], args[1]
    b = args[2] if len(args) > 2 else None
    attrs = node.attrs
    if attrs.get("group", 1) != 1:
        raise UnsupportedOperatorError("grouped conv not supported")
    if any(int(d) != 1 for d in attrs.get("dilations", [1, 1])):
        raise UnsupportedOperatorError("dilated conv not supported")
    strides = _pair(attrs.get("strides"), (1, 1))
    pads = _pair(attrs.get("pads"), (0, 0, 0, 0))
    return _conv2d(x, w, b, strides, pads)


def _op_maxpool(node, args):
    attrs = node.attrs
    kernel = _pair(attrs["kernel_shape"], None)
    strides = _pair(attrs.get("strides"), kernel)
    pads = _pair(attrs.get("pads"), (0, 0, 0, 0))
    if attrs.get("ceil_mode", 0):
        raise UnsupportedOperatorError("ceil_mode maxpool not supported")
    return _maxpool2d(args[0], kernel, strides, pads)


def _op_batchnorm(node, args):
    x, scale, bias, mean, var = args[:5]
    eps = node.attrs.get("epsilon", 1e-5)
    shape = _param_shape(scale, x)
    inv = 1.0 / np.sqrt(var.reshape(shape) + np.asarray(eps, dtype=x.dtype))
    return (x - mean.reshape(shape)) * (scale.reshape(shape) * inv) + bias.reshape(shape)


def _op_layernorm(node, args):
    x, scale = args[0], args[1]
    bias = args[2] if len(args) > 2 else None
    axis = node.attrs.get("axis", -1)
    eps = node.attrs.get("epsilon", 1e-5)
    axes = tuple(range(axis % x.ndim, x.ndim))
    mean = x.mean(axis=axes, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=axes, keepdims=True)
    y = (x - mean) / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    y = y * scale
    if bias is not None:
        y = y + bias
    return y


def _op_gemm(node, args):
    a, b = args[0], args[1]
    c = args[2] if len(args) > 2 else None
    attrs = node.attrs
    if attrs.get("transA", 0):
        a = a.T
    if attrs.get("transB", 0):
        b = b.T
    y = attrs.get("alpha", 1.0) * (a @ b)
    if c is not None:
        y = y + attrs.get("beta", 1.0) * c
    return y.astype(a.dtype, copy=False)


def _op_gather(node, args):
    data, indices = args
    axis = node.attrs.get("axis", 0)
    return np.take(data, indices.astype(np.int64), axis=axis)


def _op_reshape(node, args):
    return _reshape(args[0], args[1])


def _op_unsqueeze(node, args):
    x = args[0]
    axes = [int(v) for v in (args[1] if len(args) > 1 else node.attrs.get("axes", []))]
    out = x
    for axis in sorted(a % (x.ndim + len(axes)) for a in axes):
        out = np.expand_dims(out, axis)
    return out


def _op_squeeze(node, args):
    x = args[0]
    if len(args) > 1 and args[1] is not None:
        axes = tuple(int(v) % x.ndim for v in args[1])
        return np.squeeze(x, axis=axes)
    return np.squeeze(x)


def _op_expand(node, args):
    x, shape = args
    target = np.broadcast_shapes(x.shape, tuple(int(v) for v in shape))
    return np.ascontiguousarray(np.broadcast_to(x, target))


def _op_cast(node, args):
    to = node.attrs["to"]
    if to not in _ONNX_TO_DTYPE:
        raise UnsupportedOperatorError(f"cast to type {to} not supported")
    return args[0].astype(_ONNX_TO_DTYPE[to])


def _op_constant(node, args):
    value = node.attrs.get("value")
    if value is None:
        raise UnsupportedOperatorError("Constant node without a tensor value")
    return np.asarray(value)


def _op_flatten(node, args):
    x = args[0]
    axis = node.attrs.get("axis", 1) % (x.ndim + 1) if node.attrs.get("axis", 1) < 0 else node.attrs.get("axis", 1)
    lead = int(np.prod(x.shape[:axis])) if axis > 0 else 1
    return x.reshape(lead, -1)


def _sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


_OP_TABLE = {
    "Conv": _op_conv,
    "MaxPool": _op_maxpool,
    "BatchNormalization": _op_batchnorm,
    "LayerNormalization": _op_layernorm,
    "Gemm": _op_gemm,
    "MatMul": lambda node, args: np.matmul(args[0], args[1]),
    "Relu": lambda node, args: np.maximum(args[0], 0),
    "Sigmoid": lambda node, args: _sigmoid(args[0]),
    "Softmax": lambda node, args: _softmax(args[0], node.attrs.get("axis", -1)),
    "Add": lambda node, args: args[0] + args[1],
    "Sub": lambda node, args: args[0] - args[1],
    "Mul": lambda node, args: args[0] * args[1],
    "Div": lambda node, args: args[0] / args[1],
    "Sqrt": lambda node, args: np.sqrt(args[0]),
    "GlobalAveragePool": lambda node, args: args[0].mean(
        axis=tuple(range(2, args[0].ndim)), keepdims=True
    ),
    "Flatten": _op_flatten,
    "Shape": lambda node, args: np.asarray(args[0].shape, dtype=np.int64),
    "Concat": lambda node, args: np.concatenate(args, axis=node.attrs["axis"]),
    "Transpose": lambda node, args: np.transpose(
        args[0], node.attrs.get("perm") or tuple(reversed(range(args[0].ndim)))
    ),
    "Reshape": _op_reshape,
    "Gather": _op_gather,
    "Unsqueeze": _op_unsqueeze,
    "Squeeze": _op_squeeze,
    "Expand": _op_expand,
    "Cast": _op_cast,
    "Constant": _op_constant,
    "Identity": lambda node, args: args[0],
}

SUPPORTED_OPERATORS = frozenset(_OP_TABLE)
