from abc import ABC, abstractmethod
from array import array
from logging import getLogger as get_logger
from struct import Struct
from typing import BinaryIO, Generic, Iterable, Iterator, List, Optional, TypeVar, Union

from megfile import smart_exists, smart_open
from megfile.interfaces import Closable
from megfile.utils import get_content_size

T = TypeVar("T")

logger = get_logger(__name__)

INDEX_FILE_FORMAT = "Q"
INDEX_FILE_POSTFIX = ".idx"
INDEX_FILE_HEADER_FORMAT = "<4s4sQ"
INDEX_FILE_HEADER_PREFIX = b"HPR1"

# Index sidecar layout:
# 1. header '<4s4sQ': prefix 'HPR1', offset typecode padded to 4 bytes,
#    size of the data file the offsets were taken from
# 2. one native 'Q' per record, byte offset of the record start
# A sidecar whose prefix, typecode or recorded size disagrees with the data
# file is stale and gets rebuilt from the data.

_HEADER = Struct(INDEX_FILE_HEADER_FORMAT)
_OFFSET = Struct(INDEX_FILE_FORMAT)


def validate_index(handler, index: int) -> int:
    length = len(handler)
    if index >= length or index + length < 0:
        raise IndexError(
            "index out of range: %r, index: %d, length: %d"
            % (handler.name, index, length)
        )
    if index < 0:
        index += length
    return index


def pack_index_header(size: int) -> bytes:
    return _HEADER.pack(
        INDEX_FILE_HEADER_PREFIX, INDEX_FILE_FORMAT.ljust(4).encode(), size
    )


def read_index(index_path: str, data_size: int) -> Optional[array]:
    """Load offsets from a sidecar

    :returns: ``None`` when the sidecar is missing or stale
    """
    if not smart_exists(index_path):
        return None
    with smart_open(index_path, "rb") as fp_index:
        content = fp_index.read()
    if len(content) < _HEADER.size:
        return None
    prefix, typecode, size = _HEADER.unpack(content[: _HEADER.size])
    body = content[_HEADER.size :]
    if (
        prefix != INDEX_FILE_HEADER_PREFIX
        or typecode.decode(errors="backslashreplace").strip() != INDEX_FILE_FORMAT
        or size != data_size
        or len(body) % _OFFSET.size != 0
    ):
        return None
    offsets = array(INDEX_FILE_FORMAT)
    offsets.frombytes(body)
    return offsets


def write_index(index_path: str, offsets: Iterable[int], data_size: int):
    if not isinstance(offsets, array):
        offsets = array(INDEX_FILE_FORMAT, offsets)
    with smart_open(index_path, "wb") as fp_index:
        fp_index.write(pack_index_header(data_size))
        fp_index.write(offsets.tobytes())


class RecordHandler(Closable, ABC):
    def __init__(self, file_object: BinaryIO, *, close_fileobj_when_close: bool):
        self._file_object = file_object
        self._close_fileobj_when_close = close_fileobj_when_close

    @property
    def name(self):
        return getattr(self._file_object, "name", type(self._file_object).__name__)

    @property
    @abstractmethod
    def mode(self) -> str:
        pass

    def __repr__(self):
        return "%s(%r, %r)" % (self.__class__.__qualname__, self.name, self.mode)

    def _close(self):
        if self._close_fileobj_when_close:
            self._file_object.close()


class BaseRecordReader(RecordHandler, Generic[T]):
    """Random access over a record file with an offset sidecar

    A missing or stale sidecar is rebuilt from the data. When the sidecar
    location is not writable, the offsets are only kept in memory.
    """

    def __init__(
        self,
        fp_data: BinaryIO,
        index_path: Optional[str] = None,
        *,
        close_fileobj_when_close: bool = False,
    ):
        super().__init__(fp_data, close_fileobj_when_close=close_fileobj_when_close)
        data_size = get_content_size(fp_data)
        offsets = read_index(index_path, data_size) if index_path else None
        if offsets is None:
            offsets = self._build_index(fp_data)
            if index_path:
                try:
                    write_index(index_path, offsets, data_size)
                except OSError as error:
                    logger.warning(
                        "cannot write index: %r, because of %s", index_path, error
                    )
        self._offsets = offsets

    @property
    def mode(self) -> str:
        return "r"

    @classmethod
    @abstractmethod
    def _build_index(cls, file_object: BinaryIO) -> array:
        pass

    @abstractmethod
    def _read_at(self, offset: int, index: int) -> T:
        pass

    def count(self) -> int:
        return len(self._offsets)

    def __len__(self) -> int:
        return self.count()

    def get(self, index: int) -> T:
        index = validate_index(self, index)
        return self._read_at(self._offsets[index], index)

    def __getitem__(self, index: Union[int, slice]) -> Union[T, List[T]]:
        if isinstance(index, slice):
            return [self.get(i) for i in range(self.count())[index]]
        return self.get(index)

    def __iter__(self) -> Iterator[T]:
        for index in range(self.count()):
            yield self.get(index)


class BaseRecordWriter(RecordHandler, Generic[T]):
    """Append-only record writer that maintains the offset sidecar"""

    def __init__(
        self,
        fp_data: BinaryIO,
        index_path: str,
        *,
        close_fileobj_when_close: bool = False,
    ):
        super().__init__(fp_data, close_fileobj_when_close=close_fileobj_when_close)
        self._index_path = index_path
        self._offsets = array(INDEX_FILE_FORMAT)

    @property
    def mode(self) -> str:
        return "w"

    def append(self, value: T):
        """Add a record

        :param value: Record to be added
        """
        offset = self._file_object.tell()
        self._append(value)
        self._offsets.append(offset)

    def extend(self, values: Iterable[T]):
        for value in values:
            self.append(value)

    @abstractmethod
    def _append(self, value: T):
        pass

    def commit(self):
        """Flush records and rewrite the sidecar"""
        self._file_object.flush()
        write_index(self._index_path, self._offsets, self._file_object.tell())

    def _close(self):
        self.commit()
        super()._close()
