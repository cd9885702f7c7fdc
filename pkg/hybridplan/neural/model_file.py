from logging import getLogger as get_logger
from struct import Struct, error as StructError

import numpy as np
from megfile import smart_open

from hybridplan.errors import InvalidParameterError
from hybridplan.neural.mlp import LAYER_SHAPES, MlpModel

__all__ = ["MODEL_FILE_MAGIC", "MODEL_FILE_VERSION", "load_model", "save_model"]

logger = get_logger(__name__)

MODEL_FILE_MAGIC = b"HPMP"
MODEL_FILE_VERSION = 1

# Model file layout:
# 1. header '<4sHH': magic 'HPMP', format version, layer count
# 2. per layer '<II': fan in, fan out
# 3. dropout probability '<d'
# 4. per layer little-endian float64, weight (fan in x fan out, row-major)
#    followed by bias (fan out)

_HEADER = Struct("<4sHH")
_LAYER = Struct("<II")
_DROPOUT = Struct("<d")
_FLOAT = np.dtype("<f8")


def save_model(model: MlpModel, path: str):
    with smart_open(path, "wb") as fp:
        fp.write(_HEADER.pack(MODEL_FILE_MAGIC, MODEL_FILE_VERSION, len(model.layers)))
        for layer in model.layers.values():
            fp.write(_LAYER.pack(*layer.shape))
        fp.write(_DROPOUT.pack(model.dropout))
        for layer in model.layers.values():
            fp.write(np.ascontiguousarray(layer.weight, dtype=_FLOAT).tobytes())
            fp.write(np.ascontiguousarray(layer.bias, dtype=_FLOAT).tobytes())
    logger.info("model saved: %r", path)


def _unpack(fmt: Struct, content: bytes, offset: int, path: str):
    try:
        return fmt.unpack_from(content, offset), offset + fmt.size
    except StructError:
        raise InvalidParameterError("truncated model file: %r" % path) from None


def load_model(path: str, seed: int = 0) -> MlpModel:
    """Read a model written by :func:`save_model`

    :param seed: Seed of the dropout stream of the loaded model
    :raises InvalidParameterError: On a foreign, truncated or mis-shaped file
    """
    with smart_open(path, "rb") as fp:
        content = fp.read()
    (magic, version, count), offset = _unpack(_HEADER, content, 0, path)
    if magic != MODEL_FILE_MAGIC:
        raise InvalidParameterError("not a model file: %r, magic: %r" % (path, magic))
    if version != MODEL_FILE_VERSION:
        raise InvalidParameterError(
            "unsupported model file version: %r, version: %d" % (path, version)
        )
    shapes = []
    for _ in range(count):
        shape, offset = _unpack(_LAYER, content, offset, path)
        shapes.append(shape)
    if shapes != list(LAYER_SHAPES.values()):
        raise InvalidParameterError(
            "layer shapes mismatch: %r, shapes: %r" % (path, shapes)
        )
    (dropout,), offset = _unpack(_DROPOUT, content, offset, path)
    model = MlpModel(seed, dropout)
    values = {}
    for name, (fan_in, fan_out) in LAYER_SHAPES.items():
        for kind, shape in (("weight", (fan_in, fan_out)), ("bias", (fan_out,))):
            size = int(np.prod(shape))
            end = offset + size * _FLOAT.itemsize
            if end > len(content):
                raise InvalidParameterError("truncated model file: %r" % path)
            values["%s.%s" % (name, kind)] = np.frombuffer(
                content, dtype=_FLOAT, count=size, offset=offset
            ).reshape(shape)
            offset = end
    if offset != len(content):
        raise InvalidParameterError(
            "trailing data in model file: %r, %d bytes" % (path, len(content) - offset)
        )
    model.set_parameters(values)
    return model
