"""Write-only ONNX serializer.

The export tools cannot assume the onnx package exists, so this module
emits ModelProto bytes directly in the protobuf wire format. It is
deliberately independent of the consumer's reader: the two meet only at
the published .onnx file format, which doubles as an interop check.

Only what an inference graph needs is supported: nodes with scalar/list
attributes, float32/int64 initializers (raw little-endian payloads), and
tensor-typed graph inputs/outputs with symbolic or fixed dimensions.
"""

from __future__ import annotations

import struct

import numpy as np

# TensorProto.DataType
FLOAT32 = 1
INT64 = 7

_NUMPY_TO_ONNX = {np.dtype(np.float32): FLOAT32, np.dtype(np.int64): INT64}


def _varint(value: int) -> bytes:
    if value < 0:
        value &= (1 << 64) - 1
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        out.append(byte | 0x80 if value else byte)
        if not value:
            return bytes(out)


def _key(field: int, wire: int) -> bytes:
    return _varint((field << 3) | wire)


def _ld(field: int, payload: bytes) -> bytes:
    return _key(field, 2) + _varint(len(payload)) + payload


def _string(field: int, text: str) -> bytes:
    return _ld(field, text.encode("utf-8"))


def _int_field(field: int, value: int) -> bytes:
    return _key(field, 0) + _varint(value)


def _float_field(field: int, value: float) -> bytes:
    return _key(field, 5) + struct.pack("<f", value)


def _tensor(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype not in _NUMPY_TO_ONNX:
        raise TypeError(f"initializer {name!r}: dtype {array.dtype} not supported")
    out = bytearray()
    for dim in array.shape:
        out += _int_field(1, int(dim))
    out += _int_field(2, _NUMPY_TO_ONNX[array.dtype])
    if name:
        out += _string(8, name)
    out += _ld(9, np.ascontiguousarray(array).astype(array.dtype.newbyteorder("<")).tobytes())
    return bytes(out)


_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR = 1, 2, 3, 4
_ATTR_FLOATS, _ATTR_INTS = 6, 7


def _attribute(name: str, value) -> bytes:
    out = bytearray(_string(1, name))
    if isinstance(value, bool):
        raise TypeError("write attribute bools as ints")
    if isinstance(value, (int, np.integer)):
        out += _key(3, 0) + _varint(int(value))
        out += _int_field(20, _ATTR_INT)
    elif isinstance(value, float):
        out += _float_field(2, value)
        out += _int_field(20, _ATTR_FLOAT)
    elif isinstance(value, str):
        out += _ld(4, value.encode("utf-8"))
        out += _int_field(20, _ATTR_STRING)
    elif isinstance(value, np.ndarray):
        out += _ld(5, _tensor("", value))
        out += _int_field(20, _ATTR_TENSOR)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, (int, np.integer)) for v in value):
        packed = b"".join(_varint(int(v)) for v in value)
        out += _ld(8, packed)
        out += _int_field(20, _ATTR_INTS)
    elif isinstance(value, (list, tuple)):
        packed = b"".join(struct.pack("<f", float(v)) for v in value)
        out += _ld(7, packed)
        out += _int_field(20, _ATTR_FLOATS)
    else:
        raise TypeError(f"attribute {name!r}: unsupported value {value!r}")
    return bytes(out)


def _value_info(name: str, elem_type: int, dims) -> bytes:
    shape = bytearray()
    for dim in dims:
        if isinstance(dim, int):
            shape += _ld(1, _int_field(1, dim))
        else:
            shape += _ld(1, _string(2, str(dim)))
    tensor_type = _int_field(1, elem_type) + _ld(2, bytes(shape))
    type_proto = _ld(1, tensor_type)
    return _string(1, name) + _ld(2, type_proto)


class GraphWriter:
    """Accumulates nodes and initializers, then serializes one ModelProto.

    Node names double as output names: ``add(op, inputs, name=...)``
    returns the output tensor name for chaining.
    """

    def __init__(self, graph_name: str, opset: int = 17, producer: str = "encoder-export"):
        self.graph_name = graph_name
        self.opset = opset
        self.producer = producer
        self._nodes: list[bytes] = []
        self._initializers: list[bytes] = []
        self._inputs: list[bytes] = []
        self._outputs: list[bytes] = []
        self._counter = 0

    def fresh(self, prefix: str) -> str:
        self._counter += 1
        return f"{prefix}_{self._counter}"

    def initializer(self, name: str, array: np.ndarray) -> str:
        self._initializers.append(_tensor(name, np.asarray(array)))
        return name

    def add(self, op_type: str, inputs, output: str | None = None, **attrs) -> str:
        output = output or self.fresh(op_type.lower())
        node = bytearray()
        for tensor_in in inputs:
            node += _string(1, tensor_in)
        node += _string(2, output)
        node += _string(3, output + "_node")
        node += _string(4, op_type)
        for attr_name in sorted(attrs):
            node += _ld(5, _attribute(attr_name, attrs[attr_name]))
        self._nodes.append(bytes(node))
        return output

    def declare_input(self, name: str, dims, elem_type: int = FLOAT32) -> str:
        self._inputs.append(_value_info(name, elem_type, dims))
        return name

    def declare_output(self, name: str, dims, elem_type: int = FLOAT32) -> str:
        self._outputs.append(_value_info(name, elem_type, dims))
        return name

    def tobytes(self) -> bytes:
        graph = bytearray()
        for node in self._nodes:
            graph += _ld(1, node)
        graph += _string(2, self.graph_name)
        for init in self._initializers:
            graph += _ld(5, init)
        for info in self._inputs:
            graph += _ld(11, info)
        for info in self._outputs:
            graph += _ld(12, info)

        model = bytearray()
        model += _int_field(1, 8)  # ir_version
        model += _string(2, self.producer)
        model += _ld(7, bytes(graph))
        model += _ld(8, _string(1, "") + _int_field(2, self.opset))
        return bytes(model)
