"""Byte-exact file formats: gradient dumps, checkpoints, report CSVs.

GRDM (gradient dump), all little-endian::

    b"GRDM" | u16 version=1 | u32 rows | u32 cols | rows*cols f64 (row-major)
    | u64 checksum = sum of payload bytes mod 2**64

CKPT1 (checkpoint)::

    b"CKPT" | u16 version=1 | u32 n | n bytes UTF-8 config ("key = value" lines,
    sorted, '\\n'-separated) | repeated until EOF:
    u16 name_len | name UTF-8 | u32 rows | u32 cols | rows*cols f64

Every writer goes through :func:`atomic_write` (temp file + rename).
"""

import os
import struct
import tempfile

import numpy as np

GRDM_MAGIC = b"GRDM"
CKPT_MAGIC = b"CKPT"
VERSION = 1

_GRDM_HEADER = struct.Struct("<4sHII")
_CKPT_HEADER = struct.Struct("<4sHI")
_BLOCK_HEADER = struct.Struct("<II")


class FormatError(ValueError):
    """A file violates its format; the message names the broken invariant."""


def atomic_write(path, data):
    """Write ``data`` (bytes or str) to ``path`` via a temp file and rename."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _payload(matrix):
    return np.ascontiguousarray(matrix, dtype="<f8").tobytes()


def byte_checksum(data):
    return int(np.frombuffer(data, dtype=np.uint8).sum(dtype=np.uint64)) & 0xFFFFFFFFFFFFFFFF


# -- GRDM ----------------------------------------------------------------------


def encode_grdm(matrix):
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"gradient dump needs a 2-D matrix, got shape {m.shape}")
    payload = _payload(m)
    return (
        _GRDM_HEADER.pack(GRDM_MAGIC, VERSION, m.shape[0], m.shape[1])
        + payload
        + struct.pack("<Q", byte_checksum(payload))
    )


def decode_grdm(data):
    if len(data) < _GRDM_HEADER.size:
        raise FormatError("truncated header")
    magic, version, rows, cols = _GRDM_HEADER.unpack_from(data)
    if magic != GRDM_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {GRDM_MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if rows < 1 or cols < 1:
        raise FormatError(f"non-positive dimensions {rows}x{cols}")
    need = rows * cols * 8
    body = data[_GRDM_HEADER.size :]
    if len(body) != need + 8:
        raise FormatError(
            f"payload length mismatch: header says {rows}x{cols} ({need} bytes + 8-byte checksum), "
            f"file has {len(body)} bytes after the header"
        )
    payload = body[:need]
    (stored,) = struct.unpack("<Q", body[need:])
    if stored != byte_checksum(payload):
        raise FormatError("checksum mismatch")
    matrix = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)
    if not np.isfinite(matrix).all():
        raise FormatError("non-finite entries")
    return matrix


def write_grdm(path, matrix):
    atomic_write(path, encode_grdm(matrix))


def read_grdm(path):
    with open(path, "rb") as fh:
        return decode_grdm(fh.read())


# -- CKPT1 ---------------------------------------------------------------------


def encode_checkpoint(config_lines, params):
    """``config_lines``: canonical "key = value" strings; ``params``: ordered (name, 2-D array)."""
    text = "\n".join(sorted(config_lines)).encode("utf-8")
    out = [_CKPT_HEADER.pack(CKPT_MAGIC, VERSION, len(text)), text]
    for name, value in params:
        v = np.asarray(value, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"parameter {name} must be 2-D")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw + _BLOCK_HEADER.pack(*v.shape) + _payload(v))
    return b"".join(out)


def decode_checkpoint(data):
    """Returns ``(config_lines, [(name, array), ...])``."""
    if len(data) < _CKPT_HEADER.size:
        raise FormatError("truncated header")
    magic, version, n = _CKPT_HEADER.unpack_from(data)
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CKPT_MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    pos = _CKPT_HEADER.size
    if pos + n > len(data):
        raise FormatError("config block length mismatch")
    try:
        text = data[pos : pos + n].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"config block is not UTF-8: {exc}") from None
    lines = text.split("\n") if text else []
    if lines != sorted(lines):
        raise FormatError("config keys are not sorted")
    pos += n
    params = []
    while pos < len(data):
        if pos + 2 > len(data):
            raise FormatError("truncated parameter name length")
        (ln,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if pos + ln + _BLOCK_HEADER.size > len(data):
            raise FormatError("truncated parameter header")
        name = data[pos : pos + ln].decode("utf-8")
        pos += ln
        rows, cols = _BLOCK_HEADER.unpack_from(data, pos)
        pos += _BLOCK_HEADER.size
        need = rows * cols * 8
        if pos + need > len(data):
            raise FormatError(f"payload length mismatch in parameter {name!r}")
        value = np.frombuffer(data[pos : pos + need], dtype="<f8").astype(np.float64).reshape(rows, cols)
        pos += need
        params.append((name, value))
    return lines, params


def write_checkpoint(path, config_lines, params):
    atomic_write(path, encode_checkpoint(config_lines, params))


def read_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


# -- report CSV ----------------------------------------------------------------

REPORT_HEADER = "step,pss,rank_spat,rank_act,grounding_mse,action_mse,strategy,seed"


def fmt_float(x):
    """17 significant digits, locale-free; 'nan'/'inf' spelled out."""
    x = float(x)
    if x != x:
        return "nan"
    if x in (float("inf"), float("-inf")):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def report_csv(report):
    lines = [REPORT_HEADER]
    for s in report.samples:
        lines.append(
            ",".join(
                [
                    str(s.step),
                    fmt_float(s.pss),
                    str(s.rank_spat),
                    str(s.rank_act),
                    fmt_float(s.grounding_mse),
                    fmt_float(s.action_mse),
                    report.strategy.name,
                    str(report.seed),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def parse_report_csv(text):
    lines = text.splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise FormatError("missing or wrong report header")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 8:
            raise FormatError(f"line {i}: expected 8 fields, got {len(parts)}")
        try:
            rows.append(
                {
                    "step": int(parts[0]),
                    "pss": float(parts[1]),
                    "rank_spat": int(parts[2]),
                    "rank_act": int(parts[3]),
                    "grounding_mse": float(parts[4]),
                    "action_mse": float(parts[5]),
                    "strategy": parts[6],
                    "seed": int(parts[7]),
                }
            )
        except ValueError as exc:
            raise FormatError(f"line {i}: {exc}") from None
    steps = [r["step"] for r in rows]
    if steps != sorted(set(steps)):
        raise FormatError("steps are not strictly increasing")
    return rows
