import abc
import json
import os
import struct
from typing import Optional, Tuple

import numpy as np

header_length_format = "<I"
data_alignment = 4


class FileWriter:
    def __init__(self, out_path: str):
        self.out_path = out_path
        self.sample_index = 0

    @abc.abstractmethod
    def start_collect(self):
        pass

    @abc.abstractmethod
    def end_collect(self):
        pass

    @abc.abstractmethod
    def _collect_next(self, sequence, sample_index: int):
        pass

    def collect_next(self, sequence, sample_index: int = None):
        if sample_index is None:
            sample_index = self.sample_index
        self._collect_next(sequence, sample_index)
        self.sample_index += 1

    def __enter__(self):
        self.start_collect()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            self.end_collect()
        else:
            self.abort()

    def abort(self):
        pass


def encode_header(magic: bytes, header: dict) -> bytes:
    """
    Serialize `magic | uint32 header length | JSON header`. The JSON text is padded with spaces so the data that
    follows starts at a multiple of 4 bytes.

    :param magic: 8 byte file magic
    :param header: JSON-serializable header
    :return: encoded prefix
    """
    assert len(magic) == 8
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    prefix = len(magic) + struct.calcsize(header_length_format)
    text += b" " * ((-(prefix + len(text))) % data_alignment)
    return magic + struct.pack(header_length_format, len(text)) + text


def atomic_write(out_path: str, data: bytes):
    """
    Write to a temporary file next to the destination, then rename it.
    """
    tmp_path = out_path + ".tmp"
    with open(tmp_path, "wb") as f:
        f.write(data)
    os.replace(tmp_path, out_path)


class ContainerWriter(FileWriter):
    """
    Collect named arrays and write them into a single little-endian float32 container:
    `magic | uint32 header length | JSON header | array data`.

    The header lists every array's name and shape (in collection order) and carries free-form metadata.
    """

    def __init__(self, out_path: str, magic: bytes, meta: Optional[dict] = None):
        super().__init__(out_path)
        self.magic = magic
        self.meta = dict(meta or {})
        self._arrays = []

    def start_collect(self):
        self._arrays = []
        self.sample_index = 0

    def end_collect(self):
        header = {
            "arrays": [{"name": name, "shape": list(a.shape)} for name, a in self._arrays],
            "dtype": "<f4",
            "meta": self.meta
        }
        blobs = [np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in self._arrays]
        atomic_write(self.out_path, encode_header(self.magic, header) + b"".join(blobs))
        self._arrays = []

    def abort(self):
        self._arrays = []

    def _collect_next(self, sequence: Tuple[str, np.ndarray], sample_index: int):
        name, array = sequence
        if any(name == n for n, _ in self._arrays):
            raise ValueError(f"Array '{name}' was collected twice")
        array = np.asarray(array)
        if not np.all(np.isfinite(array)):
            raise ValueError(f"Array '{name}' contains non-finite values")
        self._arrays.append((name, array))


def write_container(out_path: str, magic: bytes, arrays: dict, meta: Optional[dict] = None):
    with ContainerWriter(out_path, magic, meta) as writer:
        for name, array in arrays.items():
            writer.collect_next((name, array))
