# Copyright 2026 The raydet Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Reading and writing pipeline artifacts.

Tensors use the RAYTNSR1 container: the 8 magic bytes, a little-endian u32
header length, a UTF-8 JSON header and the little-endian f32 payload in
row-major order. JSON documents are written with sorted keys so identical
inputs give byte-identical files.
"""

import json
import logging
import os
import struct
from typing import Any, Iterable, List

import numpy as np

from raydet.guard import MalformedInputError, UsageError

log = logging.getLogger(__name__)

MAGIC = b"RAYTNSR1"
DTYPE = "f32"
LAYOUT = "row-major"
TENSOR_SUFFIX = ".rtn"


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def encode_tensor(array: np.ndarray) -> bytes:
    """RAYTNSR1 bytes of an array."""
    array = np.asarray(array)
    if not np.all(np.isfinite(array)):
        raise MalformedInputError("tensor has non-finite values")
    header = _dumps(
        {"dtype": DTYPE, "layout": LAYOUT, "shape": list(array.shape)}
    ).encode("utf-8")
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    return MAGIC + struct.pack("<I", len(header)) + header + payload


def decode_tensor(blob: bytes, path: str = None) -> np.ndarray:
    """Array (float64) from RAYTNSR1 bytes."""
    if blob[: len(MAGIC)] != MAGIC:
        raise MalformedInputError("bad tensor magic", path)
    offset = len(MAGIC)
    if len(blob) < offset + 4:
        raise MalformedInputError("truncated tensor header", path)
    (length,) = struct.unpack("<I", blob[offset:offset + 4])
    offset += 4
    try:
        header = json.loads(blob[offset:offset + length].decode("utf-8"))
        shape = [int(d) for d in header["shape"]]
        dtype = header["dtype"]
        layout = header["layout"]
    except (ValueError, KeyError, TypeError) as e:
        raise MalformedInputError(f"bad tensor header: {e}", path)
    if dtype != DTYPE or layout != LAYOUT:
        raise MalformedInputError(
            f"unsupported tensor {dtype}/{layout}", path
        )
    offset += length
    count = int(np.prod(shape, dtype=np.int64))
    if len(blob) - offset != 4 * count:
        raise MalformedInputError(
            f"payload holds {len(blob) - offset} bytes, shape {shape} "
            f"needs {4 * count}",
            path,
        )
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    return data.astype(np.float64).reshape(shape)


def _require(path: str) -> None:
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")


def write_tensor(path: str, array: np.ndarray) -> None:
    """Write an array as RAYTNSR1."""
    with open(path, "wb") as f:
        f.write(encode_tensor(array))
    log.debug(f"Wrote tensor {path} {tuple(np.shape(array))}")


def read_tensor(path: str) -> np.ndarray:
    """Read a RAYTNSR1 file."""
    _require(path)
    with open(path, "rb") as f:
        return decode_tensor(f.read(), path)


def write_json(path: str, obj: Any) -> None:
    """Write a JSON document with sorted keys and a trailing newline."""
    with open(path, "w") as f:
        f.write(json.dumps(obj, sort_keys=True, indent=2))
        f.write("\n")
    log.debug(f"Wrote {path}")


def read_json(path: str) -> Any:
    """Read a JSON document."""
    _require(path)
    try:
        with open(path) as f:
            return json.load(f)
    except ValueError as e:
        raise MalformedInputError(f"bad JSON: {e}", path)


def write_jsonl(path: str, records: Iterable[dict]) -> int:
    """Write one sorted-key JSON object per line; returns the count."""
    count = 0
    with open(path, "w") as f:
        for record in records:
            f.write(_dumps(record))
            f.write("\n")
            count += 1
    log.debug(f"Wrote {count} records to {path}")
    return count


def read_jsonl(path: str) -> List[dict]:
    """Read JSON lines, skipping blank lines."""
    _require(path)
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as e:
                raise MalformedInputError(f"line {lineno}: {e}", path)
            if not isinstance(record, dict):
                raise MalformedInputError(
                    f"line {lineno}: expected an object", path
                )
            records.append(record)
    return records


FORMAT_JSON = "json"
FORMAT_TENSOR = "tensor"
FORMATS = (FORMAT_JSON, FORMAT_TENSOR)


def array_path(out_dir: str, stem: str, fmt: str = FORMAT_TENSOR) -> str:
    """Artifact path of an array in the given format."""
    suffix = ".json" if fmt == FORMAT_JSON else TENSOR_SUFFIX
    return os.path.join(out_dir, stem + suffix)


def write_array(path: str, array: np.ndarray) -> None:
    """Write an array as JSON ({shape, data}) or RAYTNSR1, by suffix."""
    if not path.endswith(".json"):
        write_tensor(path, array)
        return
    array = np.asarray(array, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise MalformedInputError("array has non-finite values")
    write_json(
        path,
        {"shape": list(array.shape), "data": array.ravel().tolist()},
    )


def read_array(path: str) -> np.ndarray:
    """Read an array written by write_array."""
    if not path.endswith(".json"):
        return read_tensor(path)
    record = read_json(path)
    try:
        shape = [int(d) for d in record["shape"]]
        data = np.asarray(record["data"], dtype=np.float64)
        return data.reshape(shape)
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedInputError(f"bad array document: {e}", path)
