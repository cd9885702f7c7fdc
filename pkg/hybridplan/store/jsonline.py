from array import array
from typing import Any, BinaryIO, Optional, Union

from megfile import smart_open

import hybridplan.utils.compat_json as json
from hybridplan.errors import InvalidRecordError
from hybridplan.store.base import (
    INDEX_FILE_FORMAT,
    INDEX_FILE_POSTFIX,
    BaseRecordReader,
    BaseRecordWriter,
)
from hybridplan.utils import short_bytes

__all__ = [
    "JsonlRecordReader",
    "JsonlRecordWriter",
    "records_open",
]

NEWLINE = b"\n"


class JsonlRecordReader(BaseRecordReader[Any]):
    """Random reading of json records, one per line"""

    @classmethod
    def _build_index(cls, file_object: BinaryIO) -> array:
        offsets = array(INDEX_FILE_FORMAT)
        file_object.seek(0)
        current_offset = 0
        for line in file_object:
            if line.strip():
                offsets.append(current_offset)
            current_offset += len(line)
        return offsets

    def _read_at(self, offset: int, index: int) -> Any:
        self._file_object.seek(offset)
        line = self._file_object.readline()
        if not line:
            raise InvalidRecordError(
                "out of data: %r, index: %d, offset: %d" % (self.name, index, offset)
            )
        try:
            return json.loads(line)
        except json.JSONDecodeError as error:
            raise InvalidRecordError(
                "failed to decode json: %r, lineno: %d, line: %s, because of %s"
                % (self.name, index, short_bytes(line), error)
            )


class JsonlRecordWriter(BaseRecordWriter[Any]):
    """Writes json records, one per line"""

    def _append(self, value: Any):
        self._file_object.write(json.dumps(value))
        self._file_object.write(NEWLINE)


def records_open(
    path: str, mode: str = "r", *, index_path: Optional[str] = None
) -> Union[JsonlRecordReader, JsonlRecordWriter]:
    """Open a json-lines record file

    .. note::
        In read mode a missing or stale ``.idx`` sidecar is rebuilt from the
        data file.

    :param path: Record file path, local or any ``megfile`` protocol
    :param mode: ``r`` or ``w``
    :param index_path: Sidecar path, default is ``path + ".idx"``
    :raises ValueError: Invalid mode
    """
    if mode not in ("r", "w"):
        raise ValueError("unacceptable mode: %r" % mode)
    if index_path is None:
        index_path = path + INDEX_FILE_POSTFIX
    fp_data = smart_open(path, mode + "b")
    if mode == "r":
        return JsonlRecordReader(fp_data, index_path, close_fileobj_when_close=True)
    return JsonlRecordWriter(fp_data, index_path, close_fileobj_when_close=True)
