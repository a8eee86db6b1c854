"""Checksummed binary artifacts and small JSON helpers.

Container layout: 8-byte magic, 32-byte SHA-256 digest of the payload, then the
``torch.save`` payload. Every payload is a dict carrying ``format`` and ``version``.
"""
import hashlib
import io
import json
from pathlib import Path

import torch

from .exceptions import CorruptCheckpointError, VersionError

MAGIC = b'POSELIFT'
DIGEST_SIZE = 32


def write_checksummed(path, payload):
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    data = buffer.getvalue()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(MAGIC + hashlib.sha256(data).digest() + data)
    return path


def read_checksummed(path, expected_format, supported_versions):
    blob = Path(path).read_bytes()
    header = len(MAGIC) + DIGEST_SIZE
    if len(blob) <= header or not blob.startswith(MAGIC):
        raise CorruptCheckpointError(f'{path}: not a PoseLift artifact or truncated header')
    digest, data = blob[len(MAGIC):header], blob[header:]
    if hashlib.sha256(data).digest() != digest:
        raise CorruptCheckpointError(f'{path}: checksum mismatch, the file is truncated or altered')
    try:
        payload = torch.load(io.BytesIO(data), map_location='cpu', weights_only=True)
    except Exception as exc:
        raise CorruptCheckpointError(f'{path}: payload cannot be decoded ({exc})') from exc

    if payload.get('format') != expected_format:
        raise VersionError(f'{path}: holds {payload.get("format")!r}, expected {expected_format!r}')
    if payload.get('version') not in supported_versions:
        raise VersionError(
            f'{path}: version {payload.get("version")} is not one of {sorted(supported_versions)}'
        )
    return payload


def file_checksum(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + '\n')
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()
