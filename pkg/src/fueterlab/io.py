"""Binary section formats and small text helpers.

All binary payloads are little-endian. ``FUET1`` and ``FUET4`` share one header::

    magic (8s) | version (u32) | target id (16s) | convention table version (u32)
    | n (u32) | L (f64) | winding block (f64, dim x 4) | node-major chart coordinates

``FUSP1`` stores a sphere map as six panel blocks, and a trajectory bundle is a
short header followed by concatenated ``FUET1`` blobs.
"""

from __future__ import annotations

import struct

import numpy as np

from . import CONVENTION_TABLE_VERSION
from .fields3d import Section3
from .fueter4d import Grid4, Section4
from .numerics import Grid3
from .spheregrid import SphereGrid
from .spheremaps import Convention, SphereMap
from .targets import Target, get_target

__all__ = [
    "FormatError",
    "section_to_bytes",
    "section_from_bytes",
    "sphere_map_to_bytes",
    "sphere_map_from_bytes",
    "trajectory_to_bytes",
    "trajectory_from_bytes",
    "save_section",
    "load_section",
]

_HEAD = struct.Struct("<8sI16sIId")
_SPHERE = struct.Struct("<8s16s16sII")
_TRAJ = struct.Struct("<8sIdd")
_VERSION = 1
_F8 = np.dtype("<f8")


class FormatError(ValueError):
    pass


def _magic(tag: str) -> bytes:
    return tag.encode("ascii").ljust(8, b"\0")


def _target_tag(target: Target) -> str:
    chart = getattr(target, "chart_id", None)
    return f"{target.target_id}:{chart}" if target.target_id == "ah" and chart else target.target_id


def _target_from_tag(tag: str) -> Target:
    if tag.startswith("ah:"):
        from .atiyah_hitchin import AtiyahHitchin

        return AtiyahHitchin(chart=tag.split(":", 1)[1])
    return get_target(tag)


def _pad(s: str, width: int) -> bytes:
    b = s.encode("ascii")
    if len(b) > width:
        raise FormatError(f"{s!r} exceeds {width} bytes")
    return b.ljust(width, b"\0")


def _unpad(b: bytes) -> str:
    return b.rstrip(b"\0").decode("ascii")


def section_to_bytes(s: Section3 | Section4) -> bytes:
    four = isinstance(s, Section4)
    head = _HEAD.pack(_magic("FUET4" if four else "FUET1"), _VERSION, _pad(_target_tag(s.target), 16),
                      CONVENTION_TABLE_VERSION, s.grid.n, float(s.grid.L))
    return head + s.winding.astype(_F8).tobytes() + s.values.astype(_F8).tobytes()


def section_from_bytes(data: bytes) -> Section3 | Section4:
    if len(data) < _HEAD.size:
        raise FormatError("truncated header")
    magic, version, tid, conv, n, L = _HEAD.unpack_from(data)
    kind = _unpad(magic)
    if kind not in ("FUET1", "FUET4") or version != _VERSION:
        raise FormatError(f"not a section file (magic {magic!r}, version {version})")
    if conv != CONVENTION_TABLE_VERSION:
        raise FormatError(f"convention table version {conv} differs from {CONVENTION_TABLE_VERSION}")
    dim = 4 if kind == "FUET4" else 3
    off = _HEAD.size
    W = np.frombuffer(data, _F8, dim * 4, off).reshape(dim, 4)
    off += W.nbytes
    count = n**dim * 4
    if len(data) != off + 8 * count:
        raise FormatError(f"payload size {len(data) - off} does not match n={n}")
    vals = np.frombuffer(data, _F8, count, off).reshape((n,) * dim + (4,))
    target = _target_from_tag(_unpad(tid))
    if dim == 3:
        return Section3(Grid3(n, L), vals, target, winding=W, tear_threshold=None)
    return Section4(Grid4(n, L), vals, target, winding=W, tear_threshold=None)


def _blob_size(n: int, dim: int) -> int:
    return _HEAD.size + 8 * (dim * 4 + n**dim * 4)


def sphere_map_to_bytes(f: SphereMap) -> bytes:
    head = _SPHERE.pack(_magic("FUSP1"), _pad(_target_tag(f.target), 16), _pad(f.convention.tag, 16),
                        f.grid.m, f.grid.order)
    return head + f.values.astype(_F8).tobytes()


def sphere_map_from_bytes(data: bytes) -> SphereMap:
    if len(data) < _SPHERE.size:
        raise FormatError("truncated header")
    magic, tid, tag, m, order = _SPHERE.unpack_from(data)
    if _unpad(magic) != "FUSP1":
        raise FormatError(f"not a sphere map file (magic {magic!r})")
    count = 6 * m * m * 4
    if len(data) != _SPHERE.size + 8 * count:
        raise FormatError("payload size does not match m")
    vals = np.frombuffer(data, _F8, count, _SPHERE.size).reshape(6, m, m, 4)
    return SphereMap(SphereGrid(m, order), vals, _target_from_tag(_unpad(tid)),
                     Convention.from_tag(_unpad(tag)))


def trajectory_to_bytes(path, dt: float, t0: float = 0.0) -> bytes:
    path = list(path)
    if not path:
        raise ValueError("empty trajectory")
    return _TRAJ.pack(_magic("FUTR1"), len(path), float(dt), float(t0)) + b"".join(
        section_to_bytes(s) for s in path)


def trajectory_from_bytes(data: bytes):
    """Returns ``(slices, dt, t0)``."""
    if len(data) < _TRAJ.size:
        raise FormatError("truncated header")
    magic, count, dt, t0 = _TRAJ.unpack_from(data)
    if _unpad(magic) != "FUTR1":
        raise FormatError(f"not a trajectory bundle (magic {magic!r})")
    off = _TRAJ.size
    out = []
    for _ in range(count):
        if len(data) < off + _HEAD.size:
            raise FormatError("bundle ends before its last slice")
        n = _HEAD.unpack_from(data, off)[4]
        size = _blob_size(n, 3)
        out.append(section_from_bytes(data[off:off + size]))
        off += size
    if off != len(data):
        raise FormatError("trailing bytes after the last slice")
    return out, dt, t0


def save_section(path, s) -> None:
    with open(path, "wb") as fh:
        fh.write(section_to_bytes(s))


def load_section(path):
    with open(path, "rb") as fh:
        return section_from_bytes(fh.read())
