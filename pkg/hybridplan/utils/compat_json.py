import numpy as np
import orjson
from orjson import JSONDecodeError, JSONEncodeError, loads

__all__ = [
    "JSONDecodeError",
    "JSONEncodeError",
    "dumps",
    "loads",
]


def create_default_func(callback):
    def default(obj):
        if isinstance(obj, np.generic):
            if isinstance(obj, np.bool_):
                return bool(obj)
            if isinstance(obj, np.integer):
                return int(obj)
            if isinstance(obj, np.floating):
                return float(obj)
        if isinstance(obj, np.ndarray):
            # non-contiguous or non-native arrays are not handled by orjson
            return obj.tolist()
        if callback is not None:
            return callback(obj)
        raise TypeError

    return default


def dumps(obj, default=None, *, indent: bool = False, sort_keys: bool = False):
    """Serialize to json bytes

    numpy scalars and arrays are accepted anywhere in ``obj``.

    :param default: Fallback for otherwise unsupported types
    :param indent: Pretty print with two spaces
    :param sort_keys: Emit object keys in sorted order
    """
    option = orjson.OPT_SERIALIZE_NUMPY
    if indent:
        option |= orjson.OPT_INDENT_2
    if sort_keys:
        option |= orjson.OPT_SORT_KEYS
    return orjson.dumps(obj, default=create_default_func(default), option=option)
