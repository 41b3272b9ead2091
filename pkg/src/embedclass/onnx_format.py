"""Reading and writing ONNX graph files without the onnx package.

ONNX models are protobuf messages; this module implements the small,
stable subset of the wire format the encoder pipeline needs: ModelProto,
GraphProto, NodeProto, AttributeProto, TensorProto, ValueInfoProto and the
shape/type messages under them. Field numbers follow onnx.proto and have
been frozen since IR version 3, so files written here load in standard
ONNX tooling and files exported elsewhere (opset >= 13) parse here as long
as they stick to the supported message subset.

Tensors are written as raw little-endian payloads; on read, the packed
``float_data``/``int64_data``/... variants are accepted too.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

from .errors import DataError


class OnnxFormatError(DataError):
    """File is not a parsable ONNX model (within the supported subset)."""


# TensorProto.DataType values
TENSOR_FLOAT = 1
TENSOR_UINT8 = 2
TENSOR_INT32 = 6
TENSOR_INT64 = 7
TENSOR_BOOL = 9
TENSOR_DOUBLE = 11

_DTYPE_TO_ONNX = {
    np.dtype(np.float32): TENSOR_FLOAT,
    np.dtype(np.uint8): TENSOR_UINT8,
    np.dtype(np.int32): TENSOR_INT32,
    np.dtype(np.int64): TENSOR_INT64,
    np.dtype(np.bool_): TENSOR_BOOL,
    np.dtype(np.float64): TENSOR_DOUBLE,
}
_ONNX_TO_DTYPE = {v: k for k, v in _DTYPE_TO_ONNX.items()}


@dataclass(frozen=True)
class ValueInfo:
    """Graph input/output declaration. Dims: int, str (symbolic) or None."""

    name: str
    elem_type: int = TENSOR_FLOAT
    dims: tuple = ()


@dataclass
class Node:
    op_type: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    attrs: dict[str, Any] = field(default_factory=dict)
    name: str = ""


@dataclass
class OnnxModel:
    nodes: list[Node]
    initializers: dict[str, np.ndarray]
    inputs: list[ValueInfo]
    outputs: list[ValueInfo]
    opset: int = 17
    graph_name: str = "graph"
    producer: str = "embedclass"
    ir_version: int = 8


# ---------------------------------------------------------------------------
# wire primitives
# ---------------------------------------------------------------------------

def _write_varint(buf: bytearray, value: int) -> None:
    if value < 0:
        value &= (1 << 64) - 1  # two's-complement 64-bit for negative int64
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


def _write_tag(buf: bytearray, field_num: int, wire_type: int) -> None:
    _write_varint(buf, (field_num << 3) | wire_type)


def _write_len_delimited(buf: bytearray, field_num: int, payload: bytes) -> None:
    _write_tag(buf, field_num, 2)
    _write_varint(buf, len(payload))
    buf.extend(payload)


def _write_string(buf: bytearray, field_num: int, value: str) -> None:
    _write_len_delimited(buf, field_num, value.encode("utf-8"))


def _write_int(buf: bytearray, field_num: int, value: int) -> None:
    _write_tag(buf, field_num, 0)
    _write_varint(buf, value)


def _write_float(buf: bytearray, field_num: int, value: float) -> None:
    _write_tag(buf, field_num, 5)
    buf.extend(struct.pack("<f", value))


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise OnnxFormatError("truncated varint")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            break
        shift += 7
        if shift > 70:
            raise OnnxFormatError("varint too long")
    return result, pos


def _as_signed64(value: int) -> int:
    return value - (1 << 64) if value & (1 << 63) else value


def _iter_fields(data: bytes) -> Iterator[tuple[int, int, Any]]:
    """Yield (field_number, wire_type, raw_value) triples of one message."""
    pos = 0
    while pos < len(data):
        tag, pos = _read_varint(data, pos)
        field_num, wire_type = tag >> 3, tag & 0x7
        if wire_type == 0:
            value, pos = _read_varint(data, pos)
        elif wire_type == 1:
            value = data[pos : pos + 8]
            pos += 8
        elif wire_type == 2:
            length, pos = _read_varint(data, pos)
            if pos + length > len(data):
                raise OnnxFormatError("truncated length-delimited field")
            value = data[pos : pos + length]
            pos += length
        elif wire_type == 5:
            value = data[pos : pos + 4]
            pos += 4
        else:
            raise OnnxFormatError(f"unsupported wire type {wire_type}")
        yield field_num, wire_type, value


def _packed_ints(value: bytes) -> list[int]:
    out = []
    pos = 0
    while pos < len(value):
        v, pos = _read_varint(value, pos)
        out.append(_as_signed64(v))
    return out


# ---------------------------------------------------------------------------
# tensors
# ---------------------------------------------------------------------------

def _serialize_tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    shape = arr.shape  # captured first: ascontiguousarray turns rank-0 into rank-1
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _DTYPE_TO_ONNX:
        raise OnnxFormatError(f"unsupported tensor dtype {arr.dtype}")
    buf = bytearray()
    for dim in shape:
        _write_int(buf, 1, int(dim))
    _write_int(buf, 2, _DTYPE_TO_ONNX[arr.dtype])
    if name:
        _write_string(buf, 8, name)
    little = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    _write_len_delimited(buf, 9, little.tobytes())
    return bytes(buf)


def _parse_tensor(data: bytes) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    data_type = TENSOR_FLOAT
    name = ""
    raw: bytes | None = None
    float_data: list[float] = []
    int_data: list[int] = []
    double_data: list[float] = []
    for field_num, wire_type, value in _iter_fields(data):
        if field_num == 1:
            dims.extend(_packed_ints(value) if wire_type == 2 else [_as_signed64(value)])
        elif field_num == 2:
            data_type = value
        elif field_num == 4:
            if wire_type == 2:
                float_data.extend(struct.unpack(f"<{len(value) // 4}f", value))
            else:
                float_data.append(struct.unpack("<f", value)[0])
        elif field_num in (5, 7):
            int_data.extend(_packed_ints(value) if wire_type == 2 else [_as_signed64(value)])
        elif field_num == 8:
            name = value.decode("utf-8")
        elif field_num == 9:
            raw = value
        elif field_num == 10:
            if wire_type == 2:
                double_data.extend(struct.unpack(f"<{len(value) // 8}d", value))
            else:
                double_data.append(struct.unpack("<d", value)[0])
    if data_type not in _ONNX_TO_DTYPE:
        raise OnnxFormatError(f"unsupported tensor data type {data_type}")
    dtype = _ONNX_TO_DTYPE[data_type]
    shape = tuple(dims)
    if raw is not None:
        arr = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype)
    elif float_data:
        arr = np.asarray(float_data, dtype=dtype)
    elif double_data:
        arr = np.asarray(double_data, dtype=dtype)
    elif int_data:
        arr = np.asarray(int_data, dtype=dtype)
    else:
        arr = np.zeros(0, dtype=dtype)
    expected = int(np.prod(shape)) if shape else 1
    if arr.size != expected:
        raise OnnxFormatError(
            f"tensor {name!r}: payload holds {arr.size} elements, shape {shape} needs {expected}"
        )
    return name, arr.reshape(shape)


# ---------------------------------------------------------------------------
# attributes
# ---------------------------------------------------------------------------

_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR = 1, 2, 3, 4
_ATTR_FLOATS, _ATTR_INTS = 6, 7


def _serialize_attribute(name: str, value: Any) -> bytes:
    buf = bytearray()
    _write_string(buf, 1, name)
    if isinstance(value, bool):
        raise OnnxFormatError("attribute bools must be written as ints")
    if isinstance(value, (int, np.integer)):
        _write_tag(buf, 3, 0)
        _write_varint(buf, int(value))
        _write_int(buf, 20, _ATTR_INT)
    elif isinstance(value, (float, np.floating)):
        _write_float(buf, 2, float(value))
        _write_int(buf, 20, _ATTR_FLOAT)
    elif isinstance(value, str):
        _write_len_delimited(buf, 4, value.encode("utf-8"))
        _write_int(buf, 20, _ATTR_STRING)
    elif isinstance(value, np.ndarray):
        _write_len_delimited(buf, 5, _serialize_tensor("", value))
        _write_int(buf, 20, _ATTR_TENSOR)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, (int, np.integer)) for v in value):
        packed = bytearray()
        for v in value:
            _write_varint(packed, int(v))
        _write_len_delimited(buf, 8, bytes(packed))
        _write_int(buf, 20, _ATTR_INTS)
    elif isinstance(value, (list, tuple)):
        packed = bytearray()
        for v in value:
            packed.extend(struct.pack("<f", float(v)))
        _write_len_delimited(buf, 7, bytes(packed))
        _write_int(buf, 20, _ATTR_FLOATS)
    else:
        raise OnnxFormatError(f"unsupported attribute value for {name!r}: {type(value)}")
    return bytes(buf)


def _parse_attribute(data: bytes) -> tuple[str, Any]:
    name = ""
    single_f = single_i = single_s = tensor = None
    floats: list[float] = []
    ints: list[int] = []
    for field_num, wire_type, value in _iter_fields(data):
        if field_num == 1:
            name = value.decode("utf-8")
        elif field_num == 2:
            single_f = struct.unpack("<f", value)[0]
        elif field_num == 3:
            single_i = _as_signed64(value)
        elif field_num == 4:
            single_s = value.decode("utf-8")
        elif field_num == 5:
            tensor = _parse_tensor(value)[1]
        elif field_num == 7:
            if wire_type == 2:
                floats.extend(struct.unpack(f"<{len(value) // 4}f", value))
            else:
                floats.append(struct.unpack("<f", value)[0])
        elif field_num == 8:
            ints.extend(_packed_ints(value) if wire_type == 2 else [_as_signed64(value)])
    if tensor is not None:
        return name, tensor
    if single_s is not None:
        return name, single_s
    if ints:
        return name, ints
    if floats:
        return name, floats
    if single_i is not None:
        return name, single_i
    if single_f is not None:
        return name, single_f
    return name, None


# ---------------------------------------------------------------------------
# value info / shapes
# ---------------------------------------------------------------------------

def _serialize_value_info(info: ValueInfo) -> bytes:
    shape = bytearray()
    for dim in info.dims:
        dim_buf = bytearray()
        if isinstance(dim, int):
            _write_int(dim_buf, 1, dim)
        elif isinstance(dim, str):
            _write_string(dim_buf, 2, dim)
        # None: emit an empty Dimension (unknown)
        _write_len_delimited(shape, 1, bytes(dim_buf))
    tensor_type = bytearray()
    _write_int(tensor_type, 1, info.elem_type)
    _write_len_delimited(tensor_type, 2, bytes(shape))
    type_proto = bytearray()
    _write_len_delimited(type_proto, 1, bytes(tensor_type))
    buf = bytearray()
    _write_string(buf, 1, info.name)
    _write_len_delimited(buf, 2, bytes(type_proto))
    return bytes(buf)


def _parse_value_info(data: bytes) -> ValueInfo:
    name = ""
    elem_type = TENSOR_FLOAT
    dims: list = []
    for field_num, _, value in _iter_fields(data):
        if field_num == 1:
            name = value.decode("utf-8")
        elif field_num == 2:
            for f2, _, v2 in _iter_fields(value):
                if f2 != 1:  # tensor_type only
                    continue
                for f3, _, v3 in _iter_fields(v2):
                    if f3 == 1:
                        elem_type = v3
                    elif f3 == 2:
                        for f4, _, v4 in _iter_fields(v3):
                            if f4 == 1:
                                dim_val: int | str | None = None
                                for f5, _, v5 in _iter_fields(v4):
                                    if f5 == 1:
                                        dim_val = _as_signed64(v5)
                                    elif f5 == 2:
                                        dim_val = v5.decode("utf-8")
                                dims.append(dim_val)
    return ValueInfo(name=name, elem_type=elem_type, dims=tuple(dims))


# ---------------------------------------------------------------------------
# nodes / graph / model
# ---------------------------------------------------------------------------

def _serialize_node(node: Node) -> bytes:
    buf = bytearray()
    for inp in node.inputs:
        _write_string(buf, 1, inp)
    for out in node.outputs:
        _write_string(buf, 2, out)
    if node.name:
        _write_string(buf, 3, node.name)
    _write_string(buf, 4, node.op_type)
    for attr_name in sorted(node.attrs):
        _write_len_delimited(buf, 5, _serialize_attribute(attr_name, node.attrs[attr_name]))
    return bytes(buf)


def _parse_node(data: bytes) -> Node:
    inputs: list[str] = []
    outputs: list[str] = []
    op_type = ""
    name = ""
    attrs: dict[str, Any] = {}
    for field_num, _, value in _iter_fields(data):
        if field_num == 1:
            inputs.append(value.decode("utf-8"))
        elif field_num == 2:
            outputs.append(value.decode("utf-8"))
        elif field_num == 3:
            name = value.decode("utf-8")
        elif field_num == 4:
            op_type = value.decode("utf-8")
        elif field_num == 5:
            attr_name, attr_value = _parse_attribute(value)
            attrs[attr_name] = attr_value
    return Node(op_type=op_type, inputs=tuple(inputs), outputs=tuple(outputs), attrs=attrs, name=name)


def serialize_model(model: OnnxModel) -> bytes:
    graph = bytearray()
    for node in model.nodes:
        _write_len_delimited(graph, 1, _serialize_node(node))
    _write_string(graph, 2, model.graph_name)
    for name, arr in model.initializers.items():
        _write_len_delimited(graph, 5, _serialize_tensor(name, arr))
    for info in model.inputs:
        _write_len_delimited(graph, 11, _serialize_value_info(info))
    for info in model.outputs:
        _write_len_delimited(graph, 12, _serialize_value_info(info))

    buf = bytearray()
    _write_int(buf, 1, model.ir_version)
    _write_string(buf, 2, model.producer)
    _write_len_delimited(buf, 7, bytes(graph))
    opset = bytearray()
    _write_string(opset, 1, "")
    _write_int(opset, 2, model.opset)
    _write_len_delimited(buf, 8, bytes(opset))
    return bytes(buf)


def parse_model(data: bytes) -> OnnxModel:
    if not data:
        raise OnnxFormatError("empty model file")
    ir_version = 0
    producer = ""
    opset = 0
    graph_bytes: bytes | None = None
    try:
        for field_num, wire_type, value in _iter_fields(data):
            if field_num == 1 and wire_type == 0:
                ir_version = value
            elif field_num == 2 and wire_type == 2:
                producer = value.decode("utf-8", errors="replace")
            elif field_num == 7 and wire_type == 2:
                graph_bytes = value
            elif field_num == 8 and wire_type == 2:
                domain = ""
                version = 0
                for f2, _, v2 in _iter_fields(value):
                    if f2 == 1:
                        domain = v2.decode("utf-8")
                    elif f2 == 2:
                        version = v2
                if domain in ("", "ai.onnx"):
                    opset = max(opset, version)
    except OnnxFormatError:
        raise
    except Exception as exc:  # malformed bytes surface as format errors
        raise OnnxFormatError(f"cannot parse model: {exc}") from exc
    if graph_bytes is None:
        raise OnnxFormatError("model has no graph")

    nodes: list[Node] = []
    initializers: dict[str, np.ndarray] = {}
    inputs: list[ValueInfo] = []
    outputs: list[ValueInfo] = []
    graph_name = ""
    for field_num, _, value in _iter_fields(graph_bytes):
        if field_num == 1:
            nodes.append(_parse_node(value))
        elif field_num == 2:
            graph_name = value.decode("utf-8")
        elif field_num == 5:
            name, arr = _parse_tensor(value)
            initializers[name] = arr
        elif field_num == 11:
            inputs.append(_parse_value_info(value))
        elif field_num == 12:
            outputs.append(_parse_value_info(value))
    # declared inputs that are just initializer declarations are not runtime inputs
    runtime_inputs = [i for i in inputs if i.name not in initializers]
    return OnnxModel(
        nodes=nodes,
        initializers=initializers,
        inputs=runtime_inputs,
        outputs=outputs,
        opset=opset,
        graph_name=graph_name,
        producer=producer,
        ir_version=ir_version,
    )


def load_model(path) -> OnnxModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read())


def save_model(model: OnnxModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))
