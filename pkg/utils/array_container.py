"""Einzeldatei-Container für benannte Arrays.

Aufbau (alle Zahlen little-endian):

    Offset  Länge  Inhalt
    0       8      Magic b"DAVISCNT"
    8       2      Formatversion (uint16, aktuell 1)
    10      2      reserviert (0)
    12      8      Länge L des JSON-Headers in Bytes (uint64)
    20      L      JSON-Header (UTF-8)
    20+L    ...    Rohdaten aller Arrays hintereinander

Der Header enthält {"metadata": {...}, "arrays": [{"name", "dtype", "shape",
"offset", "nbytes"}, ...]}; "offset" zählt ab Beginn des Datenblocks,
"dtype" ist ein numpy-Typstring mit expliziter Byte-Order ("<f4", "<f8", ...).
"""

import json
import os
import struct
from typing import Any, Dict, Tuple

import numpy as np

MAGIC = b"DAVISCNT"
CONTAINER_VERSION = 1
_PREFIX = struct.Struct("<8sHHQ")


class ContainerError(ValueError):
    """Ungültiger oder beschädigter Container."""


def write_container(
    path: str,
    arrays: Dict[str, np.ndarray],
    metadata: Dict[str, Any] = None,
) -> None:
    """
    Schreibt Arrays und Metadaten in eine Containerdatei.

    Args:
        path: Zieldatei
        arrays: Name → Array (Reihenfolge bleibt erhalten)
        metadata: JSON-serialisierbare Zusatzinformationen
    """
    entries = []
    blobs = []
    offset = 0
    for name, value in arrays.items():
        value = np.ascontiguousarray(value)
        little = value.astype(value.dtype.newbyteorder("<"), copy=False)
        blob = little.tobytes(order="C")
        entries.append({
            "name": name,
            "dtype": little.dtype.str,
            "shape": list(value.shape),
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)

    header = json.dumps(
        {"metadata": metadata or {}, "arrays": entries},
        sort_keys=True,
        ensure_ascii=False,
    ).encode("utf-8")

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, CONTAINER_VERSION, 0, len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def read_header(path: str) -> Tuple[Dict[str, Any], int]:
    """Liest nur den Header; liefert (Header, Start des Datenblocks)."""
    with open(path, "rb") as f:
        prefix = f.read(_PREFIX.size)
        if len(prefix) < _PREFIX.size:
            raise ContainerError(f"{path}: Datei zu kurz für einen Container")
        magic, version, _, header_len = _PREFIX.unpack(prefix)
        if magic != MAGIC:
            raise ContainerError(f"{path}: kein DAVIS-Container")
        if version != CONTAINER_VERSION:
            raise ContainerError(f"{path}: nicht unterstützte Containerversion {version}")
        raw = f.read(header_len)
        if len(raw) < header_len:
            raise ContainerError(f"{path}: Header abgeschnitten")
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"{path}: Header nicht lesbar ({e})") from e
    return header, _PREFIX.size + header_len


def read_container(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Liest alle Arrays eines Containers.

    Returns:
        (Name → Array in nativer Byte-Order, Metadaten)
    """
    header, data_start = read_header(path)
    with open(path, "rb") as f:
        f.seek(data_start)
        data = f.read()

    arrays = {}
    for entry in header["arrays"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(data):
            raise ContainerError(f"{path}: Array '{entry['name']}' abgeschnitten")
        dtype = np.dtype(entry["dtype"])
        value = np.frombuffer(data[start:start + nbytes], dtype=dtype)
        arrays[entry["name"]] = value.reshape(entry["shape"]).astype(dtype.newbyteorder("="))
    return arrays, header.get("metadata", {})
