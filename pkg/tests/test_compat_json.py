import numpy as np
import pytest

from hybridplan.utils.compat_json import (
    JSONDecodeError,
    create_default_func,
    dumps,
    loads,
)


def test_dumps_basic_types():
    assert dumps(1) == b"1"
    assert dumps(1.5) == b"1.5"
    assert dumps("string") == b'"string"'
    assert dumps([1, 2, 3]) == b"[1,2,3]"
    assert dumps({"a": 1}) == b'{"a":1}'
    assert dumps(None) == b"null"


def test_dumps_tuple():
    assert loads(dumps({"key": (1, (2, 3))})) == {"key": [1, [2, 3]]}


def test_dumps_options():
    assert dumps({"b": 1, "a": 2}, sort_keys=True) == b'{"a":2,"b":1}'
    assert dumps({"a": 1}, indent=True) == b'{\n  "a": 1\n}'


@pytest.mark.parametrize(
    "value, expected",
    [
        (np.bool_(True), True),
        (np.int32(42), 42),
        (np.uint8(7), 7),
        (np.float64(0.25), 0.25),
    ],
)
def test_dumps_numpy_scalars(value, expected):
    assert loads(dumps(value)) == expected


def test_dumps_numpy_arrays():
    assert loads(dumps(np.arange(4.0))) == [0.0, 1.0, 2.0, 3.0]
    matrix = np.arange(6).reshape(2, 3)
    # transposed views are not C contiguous
    assert loads(dumps({"m": matrix.T})) == {"m": [[0, 3], [1, 4], [2, 5]]}


def test_default_func_fallback():
    class Point:
        def __init__(self, x):
            self.x = x

    def default(obj):
        if isinstance(obj, Point):
            return {"x": obj.x}
        raise TypeError

    assert loads(dumps([Point(1), np.int64(2)], default=default)) == [{"x": 1}, 2]
    with pytest.raises(TypeError):
        create_default_func(None)(Point(1))
    with pytest.raises(TypeError):
        dumps(Point(1))


def test_loads():
    assert loads(b'{"a":[1,2.5]}') == {"a": [1, 2.5]}
    with pytest.raises(JSONDecodeError):
        loads(b"invalid json")
