import json
import os
import struct
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from util.preprocessing.data_writer import header_length_format


class ContainerFormatError(ValueError):
    pass


class ContainerHeader(NamedTuple):
    arrays: Tuple[Tuple[str, Tuple[int, ...]], ...]
    meta: dict
    data_offset: int

    def array_offsets(self) -> Dict[str, Tuple[int, Tuple[int, ...]]]:
        offsets = {}
        offset = self.data_offset
        for name, shape in self.arrays:
            offsets[name] = (offset, shape)
            offset += 4 * int(np.prod(shape, dtype=np.int64))
        return offsets

    @property
    def expected_size(self) -> int:
        return self.data_offset + sum(4 * int(np.prod(s, dtype=np.int64)) for _, s in self.arrays)


def read_header(file_name: str, magic: bytes) -> ContainerHeader:
    """
    Parse and validate the container header.

    :param file_name: container file
    :param magic: expected 8 byte magic
    :return: parsed header
    """
    prefix = len(magic) + struct.calcsize(header_length_format)
    with open(file_name, "rb") as f:
        head = f.read(prefix)
        if len(head) < prefix or head[:len(magic)] != magic:
            raise ContainerFormatError(f"{file_name}: bad magic, not a container file")
        header_length, = struct.unpack(header_length_format, head[len(magic):])
        text = f.read(header_length)
    if len(text) != header_length:
        raise ContainerFormatError(f"{file_name}: truncated header")
    try:
        header = json.loads(text.decode("utf-8"))
        arrays = tuple((a["name"], tuple(int(x) for x in a["shape"])) for a in header["arrays"])
    except (ValueError, KeyError, TypeError) as e:
        raise ContainerFormatError(f"{file_name}: malformed header ({e})")
    if header.get("dtype") != "<f4":
        raise ContainerFormatError(f"{file_name}: unsupported dtype {header.get('dtype')}")
    result = ContainerHeader(arrays, header.get("meta", {}), prefix + header_length)
    size = os.path.getsize(file_name)
    if size != result.expected_size:
        raise ContainerFormatError(f"{file_name}: expected {result.expected_size} bytes, found {size}")
    return result


def read_container(file_name: str, magic: bytes, mmap_mode: Optional[str] = None) -> Tuple[dict, Dict[str, np.ndarray]]:
    """
    Read all arrays of a container.

    :param file_name: container file
    :param magic: expected magic
    :param mmap_mode: None to load into memory, "r" to map the arrays read-only
    :return: tuple (meta, {name: array})
    """
    header = read_header(file_name, magic)
    arrays = {}
    if mmap_mode is None:
        with open(file_name, "rb") as f:
            f.seek(header.data_offset)
            for name, shape in header.arrays:
                count = int(np.prod(shape, dtype=np.int64))
                arrays[name] = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    else:
        for name, (offset, shape) in header.array_offsets().items():
            arrays[name] = np.memmap(file_name, dtype="<f4", mode=mmap_mode, offset=offset, shape=shape)
    return header.meta, arrays

