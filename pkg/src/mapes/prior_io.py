"""Prior impedance data: storage, Touchstone v1 and binary-cache I/O, partitioning.

Memory layout is frequency-major, ``Z[f]`` being the dense ``Q x Q`` slab
for one frequency. At ``Q ~ 3200`` a slab is about 160 MB of complex128.
"""
from __future__ import annotations

import re
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    IOFailure,
    CorruptCache,
    DimensionMismatch,
    HashMismatch,
    MalformedInput,
    NonIncreasingFrequencies,
    PortCountMismatch,
    ReciprocityError,
    UnsupportedFormat,
)
from .pattern import IoSelection
from .topology import PortTopology

DEFAULT_RECIPROCITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PriorData:
    topo: PortTopology
    freqs: np.ndarray
    Z: np.ndarray
    reciprocal: bool = True

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.float64).reshape(-1)
        Z = np.asarray(self.Z, dtype=np.complex128)
        Q = self.topo.Q
        if Z.ndim != 3 or Z.shape[1:] != (Q, Q):
            raise PortCountMismatch(f"prior matrices are {Z.shape[1:]}, topology has Q={Q}")
        if Z.shape[0] != freqs.size or freqs.size == 0:
            raise DimensionMismatch(f"{Z.shape[0]} matrices for {freqs.size} frequencies")
        if np.any(np.diff(freqs) <= 0) or freqs[0] <= 0:
            raise NonIncreasingFrequencies("prior frequencies must be positive and strictly increasing")
        Z = np.ascontiguousarray(Z)
        Z.flags.writeable = False
        freqs.flags.writeable = False
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "Z", Z)

    @property
    def Q(self) -> int:
        return self.topo.Q

    def reciprocity_violations(self, tol: float = DEFAULT_RECIPROCITY_TOL, limit: int | None = 100):
        """``(freq_index, p, q, deviation)`` for every ``|Z_pq - Z_qp| > tol * max(1, |Z_pq|)``."""
        out = []
        for f in range(self.Z.shape[0]):
            Zf = self.Z[f]
            dev = np.abs(Zf - Zf.T) / np.maximum(1.0, np.abs(Zf))
            for p, q in np.argwhere(np.triu(dev > tol, 1)):
                out.append((f, int(p), int(q), float(dev[p, q])))
                if limit is not None and len(out) >= limit:
                    return out
        return out

    def validate_reciprocity(self, tol: float = DEFAULT_RECIPROCITY_TOL) -> None:
        if not self.reciprocal:
            return
        bad = self.reciprocity_violations(tol)
        if bad:
            raise ReciprocityError(bad)


@dataclass(frozen=True, eq=False)
class PartitionedPrior:
    """The prior viewed in reduced port order: I/O ports first, the rest ascending.

    Blocks are materialised on request only; the reduction itself gathers
    straight from the unpermuted prior.
    """

    prior: PriorData
    io: IoSelection
    vp_index: np.ndarray

    @property
    def permutation(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.io.ports, dtype=np.int64), self.vp_index])

    @property
    def io_index(self) -> np.ndarray:
        return np.asarray(self.io.ports, dtype=np.int64)

    def blocks(self, f: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(Z_io_io, Z_io_vp, Z_vp_io, Z_vp_vp)`` at frequency index ``f``."""
        Zf = self.prior.Z[f]
        io, vp = self.io_index, self.vp_index
        return (Zf[np.ix_(io, io)], Zf[np.ix_(io, vp)], Zf[np.ix_(vp, io)], Zf[np.ix_(vp, vp)])

    def permuted(self, f: int) -> np.ndarray:
        perm = self.permutation
        return self.prior.Z[f][np.ix_(perm, perm)]


def partition(prior: PriorData, io) -> PartitionedPrior:
    if not isinstance(io, IoSelection):
        io = IoSelection(tuple(io))
    Q = prior.Q
    if len(set(io.ports)) != io.K or not all(0 <= p < Q for p in io.ports) or not 1 <= io.K < Q:
        raise MalformedInput(f"invalid I/O selection {io.ports} for Q={Q}")
    mask = np.ones(Q, dtype=bool)
    mask[list(io.ports)] = False
    vp = np.flatnonzero(mask)
    vp.flags.writeable = False
    return PartitionedPrior(prior, io, vp)


def assemble(blocks) -> np.ndarray:
    zii, ziv, zvi, zvv = blocks
    return np.block([[zii, ziv], [zvi, zvv]])


# --------------------------------------------------------------------------
# Touchstone v1
# --------------------------------------------------------------------------

_FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_EXT_RE = re.compile(r"\.[a-z](\d+)p$", re.IGNORECASE)


def z_to_s_matrices(Z: np.ndarray, z0: float) -> np.ndarray:
    """Batched ``S = (Z - z0 I)(Z + z0 I)^-1`` over a leading frequency axis."""
    n = Z.shape[-1]
    eye = np.eye(n)
    # S (Z + z0 I) = Z - z0 I  <=>  (Z + z0 I)^T S^T = (Z - z0 I)^T
    lhs = np.swapaxes(Z + z0 * eye, -1, -2)
    rhs = np.swapaxes(Z - z0 * eye, -1, -2)
    return np.swapaxes(np.linalg.solve(lhs, rhs), -1, -2)


def s_to_z_matrices(S: np.ndarray, z0: float) -> np.ndarray:
    """Batched ``Z = z0 (I + S)(I - S)^-1``."""
    n = S.shape[-1]
    eye = np.eye(n)
    lhs = np.swapaxes(eye - S, -1, -2)
    rhs = np.swapaxes(eye + S, -1, -2)
    return z0 * np.swapaxes(np.linalg.solve(lhs, rhs), -1, -2)


def _touchstone_order(n: int) -> np.ndarray:
    """Flat (row-major) matrix positions in Touchstone v1 data order."""
    if n == 2:
        return np.array([0, 2, 1, 3])  # 11 21 12 22
    return np.arange(n * n)


def write_touchstone_data(path, freqs, data: np.ndarray, param: str = "Z", ref_ohms: float = 50.0,
                          comments=()) -> Path:
    """Write ``data`` (F, n, n) in the named representation as Touchstone v1, RI format.

    Z parameters are written normalised by ``ref_ohms`` as the v1 format
    requires.
    """
    param = param.upper()
    if param not in ("Z", "S"):
        raise UnsupportedFormat(f"cannot write parameter type {param!r}")
    data = np.asarray(data, dtype=np.complex128)
    F, n, _ = data.shape
    vals = data / ref_ohms if param == "Z" else data
    order = _touchstone_order(n)
    per_line = n * n if n <= 2 else 4
    path = Path(path)
    lines = [f"! {c}" for c in comments]
    lines.append(f"! ports: {n}")
    lines.append(f"# HZ {param} RI R {ref_ohms:.17g}")
    for f in range(F):
        flat = vals[f].reshape(-1)[order]
        if n <= 2:
            rows = [flat]
        else:
            rows = [flat[r * n:(r + 1) * n] for r in range(n)]
        first = True
        for row in rows:
            for k in range(0, len(row), per_line):
                chunk = row[k:k + per_line]
                toks = " ".join(f"{v.real:.17g} {v.imag:.17g}" for v in chunk)
                if first:
                    lines.append(f"{freqs[f]:.17g} {toks}")
                    first = False
                else:
                    lines.append(toks)
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_touchstone_data(path, nports: int | None = None):
    """Parse a Touchstone v1 file into ``(freqs_hz, param, ref_ohms, data)``.

    ``data`` is (F, n, n) in the file's own representation, de-normalised
    to ohms for Z parameters. The port count comes from the ``.sNp``-style
    extension, else ``nports``.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    m = _EXT_RE.search(path.name)
    n_file = int(m.group(1)) if m else nports
    if n_file is None:
        raise UnsupportedFormat(f"{path.name}: cannot infer port count from extension")

    unit, param, fmt, ref = "GHZ", "S", "MA", 50.0
    option_seen = False
    body = []
    for raw in text.splitlines():
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if option_seen:
                continue
            option_seen = True
            toks = line[1:].upper().split()
            k = 0
            while k < len(toks):
                t = toks[k]
                if t in _FREQ_UNITS:
                    unit = t
                elif t in ("S", "Z", "Y", "H", "G"):
                    param = t
                elif t in ("RI", "MA", "DB"):
                    fmt = t
                elif t == "R" and k + 1 < len(toks):
                    ref = float(toks[k + 1])
                    k += 1
                else:
                    raise UnsupportedFormat(f"{path.name}: unknown option token {t!r}")
                k += 1
            continue
        if line.startswith("["):
            raise UnsupportedFormat(f"{path.name}: Touchstone v2 keywords are not supported")
        body.append(line)
    if param not in ("S", "Z"):
        raise UnsupportedFormat(f"{path.name}: parameter type {param} is not supported")
    try:
        nums = np.array(" ".join(body).split(), dtype=np.float64)
    except ValueError as exc:
        raise MalformedInput(f"{path.name}: {exc}") from None
    rec = 1 + 2 * n_file * n_file
    if nums.size == 0 or nums.size % rec:
        raise PortCountMismatch(
            f"{path.name}: {nums.size} values do not form whole {n_file}-port records"
        )
    nums = nums.reshape(-1, rec)
    freqs = nums[:, 0] * _FREQ_UNITS[unit]
    if np.any(np.diff(freqs) <= 0):
        raise NonIncreasingFrequencies(f"{path.name}: frequencies are not strictly increasing")
    a, b = nums[:, 1::2], nums[:, 2::2]
    if fmt == "RI":
        vals = a + 1j * b
    else:
        mag = a if fmt == "MA" else 10.0 ** (a / 20.0)
        vals = mag * np.exp(1j * np.deg2rad(b))
    F = freqs.size
    data = np.empty((F, n_file * n_file), dtype=np.complex128)
    data[:, _touchstone_order(n_file)] = vals
    data = data.reshape(F, n_file, n_file)
    if param == "Z":
        data = data * ref
    return freqs, param, ref, data


def read_touchstone(path, topo: PortTopology, reciprocal: bool = True) -> PriorData:
    """Load a prior from Touchstone v1; S data is converted to Z with the file's reference."""
    freqs, param, ref, data = read_touchstone_data(path, nports=topo.Q)
    if data.shape[-1] != topo.Q:
        raise PortCountMismatch(f"file has {data.shape[-1]} ports, topology has Q={topo.Q}")
    Z = data if param == "Z" else s_to_z_matrices(data, ref)
    return PriorData(topo, freqs, Z, reciprocal)


def write_touchstone(obj, path, fmt: str = "Z", ref_ohms: float = 50.0) -> Path:
    """Write a :class:`PriorData` or a solver response as Touchstone v1."""
    fmt = fmt.upper()
    if fmt not in ("Z", "S"):
        raise UnsupportedFormat(f"unknown output format {fmt!r}")
    if isinstance(obj, PriorData):
        freqs, data, rep, own_ref = obj.freqs, obj.Z, "Z", ref_ohms
    else:
        freqs, data, rep, own_ref = obj.freqs, obj.data, obj.representation, obj.ref_ohms
    if rep == fmt and (fmt == "Z" or own_ref == ref_ohms):
        out = data
    else:
        Z = data if rep == "Z" else s_to_z_matrices(data, own_ref)
        out = Z if fmt == "Z" else z_to_s_matrices(Z, ref_ohms)
    return write_touchstone_data(path, freqs, out, fmt, ref_ohms)


def touchstone_name(stem: str, nports: int) -> str:
    return f"{stem}.s{nports}p"


# --------------------------------------------------------------------------
# Binary cache
# --------------------------------------------------------------------------

CACHE_MAGIC = b"MAPZ1"
# Q, F, topology digest (sha256), flags
_HEADER = struct.Struct("<5sII32sI")
_FLAG_RECIPROCAL = 1
_CHUNK = 1 << 24


def cache_write(prior: PriorData, path) -> Path:
    """Little-endian binary dump with a CRC32 trailer over all preceding bytes."""
    path = Path(path)
    header = _HEADER.pack(
        CACHE_MAGIC, prior.Q, prior.freqs.size, bytes.fromhex(prior.topo.digest),
        _FLAG_RECIPROCAL if prior.reciprocal else 0,
    )
    crc = 0
    try:
        with open(path, "wb") as fh:
            for blob in (header, prior.freqs.astype("<f8").tobytes()):
                fh.write(blob)
                crc = zlib.crc32(blob, crc)
            zdata = prior.Z.astype("<c16", copy=False)
            for f in range(zdata.shape[0]):
                mv = memoryview(np.ascontiguousarray(zdata[f])).cast("B")
                for k in range(0, len(mv), _CHUNK):
                    piece = mv[k:k + _CHUNK]
                    fh.write(piece)
                    crc = zlib.crc32(piece, crc)
            fh.write(struct.pack("<I", crc))
    except OSError as exc:
        raise IOFailure(f"cannot write cache {path}: {exc}") from exc
    return path


def cache_header(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read(_HEADER.size)
    except OSError as exc:
        raise IOFailure(f"cannot read cache {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise CorruptCache(f"{path}: truncated header")
    magic, Q, F, digest, flags = _HEADER.unpack(raw)
    if magic != CACHE_MAGIC:
        raise CorruptCache(f"{path}: bad magic {magic!r}")
    return {"Q": Q, "F": F, "digest": digest.hex(), "reciprocal": bool(flags & _FLAG_RECIPROCAL)}


def cache_read(path, topo: PortTopology) -> PriorData:
    path = Path(path)
    hdr = cache_header(path)
    Q, F = hdr["Q"], hdr["F"]
    expected = _HEADER.size + 8 * F + 16 * F * Q * Q + 4
    try:
        size = path.stat().st_size
    except OSError as exc:
        raise IOFailure(f"cannot read cache {path}: {exc}") from exc
    if size != expected:
        raise CorruptCache(f"{path}: size {size} bytes, expected {expected}")
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            crc = zlib.crc32(head)
            fbytes = fh.read(8 * F)
            crc = zlib.crc32(fbytes, crc)
            Z = np.empty((F, Q, Q), dtype="<c16")
            mv = memoryview(Z).cast("B")
            for k in range(0, len(mv), _CHUNK):
                piece = mv[k:k + _CHUNK]
                got = fh.readinto(piece)
                if got != len(piece):
                    raise CorruptCache(f"{path}: truncated data")
                crc = zlib.crc32(piece, crc)
            (stored,) = struct.unpack("<I", fh.read(4))
    except OSError as exc:
        raise IOFailure(f"cannot read cache {path}: {exc}") from exc
    if stored != crc:
        raise CorruptCache(f"{path}: CRC32 mismatch")
    if Q != topo.Q:
        raise PortCountMismatch(f"cache has Q={Q}, topology has Q={topo.Q}")
    if hdr["digest"] != topo.digest:
        raise HashMismatch(f"{path}: cache was built for a different port topology")
    freqs = np.frombuffer(fbytes, dtype="<f8").astype(np.float64)
    return PriorData(topo, freqs, Z.astype(np.complex128, copy=False), hdr["reciprocal"])
