from hybridplan.store.jsonline import (
    JsonlRecordReader,
    JsonlRecordWriter,
    records_open,
)

__all__ = [
    "JsonlRecordReader",
    "JsonlRecordWriter",
    "records_open",
]
