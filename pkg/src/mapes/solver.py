"""Closed-form multiport reduction and Z/S conversion.

For a load assignment the I/O impedance is

    Z_io,io - Z_io,vp (Z_vp,vp + Z_L)^-1 Z_vp,io

Open ports carry no current, so their rows and columns are dropped before
the solve instead of being modelled as huge impedances. The linear system
therefore has one unknown per Short or Finite port, independent of K.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, MalformedInput, RepresentationMismatch, SingularSystem
from .pattern import FINITE, OPEN, IoSelection, LoadAssignment, PixelPattern, map_to_loads
from .prior_io import PartitionedPrior, PriorData, partition, s_to_z_matrices, z_to_s_matrices

DEFAULT_REF_OHMS = 50.0


@dataclass(frozen=True, eq=False)
class NetworkResponse:
    io: IoSelection
    freqs: np.ndarray
    data: np.ndarray
    representation: str = "Z"
    ref_ohms: float = DEFAULT_REF_OHMS
    # size of the factored linear system (Short + Finite ports); -1 if unknown
    system_dim: int = field(default=-1, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        freqs = np.asarray(self.freqs, dtype=np.float64).reshape(-1)
        K = self.io.K
        if data.shape != (freqs.size, K, K):
            raise DimensionMismatch(f"response data {data.shape} != {(freqs.size, K, K)}")
        if self.representation not in ("Z", "S"):
            raise MalformedInput(f"representation must be 'Z' or 'S', got {self.representation!r}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "freqs", freqs)

    @property
    def K(self) -> int:
        return self.io.K

    def to_dict(self, pattern_id=None) -> dict:
        key = self.representation.lower()
        d = {
            "pattern_id": pattern_id,
            "freqs": self.freqs.tolist(),
            "io": list(self.io.ports),
            key: np.stack([self.data.real, self.data.imag], axis=-1).tolist(),
        }
        if self.representation == "S":
            d["ref_ohms"] = self.ref_ohms
        return d

    def to_json(self, pattern_id=None) -> str:
        return json.dumps(self.to_dict(pattern_id), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkResponse":
        if "s" in d:
            rep, key = "S", "s"
        elif "z" in d:
            rep, key = "Z", "z"
        else:
            raise MalformedInput("response JSON needs a 'z' or 's' member")
        arr = np.asarray(d[key], dtype=np.float64)
        if arr.ndim != 4 or arr.shape[-1] != 2:
            raise MalformedInput(f"response '{key}' must be [F][K][K][2], got shape {arr.shape}")
        K = arr.shape[1]
        io = IoSelection(tuple(d.get("io", range(K))))
        return cls(io, d["freqs"], arr[..., 0] + 1j * arr[..., 1], rep,
                   float(d.get("ref_ohms", DEFAULT_REF_OHMS)))


def _diagnose(Z, io_idx, kept, load, freqs):
    """Find the first failing frequency and estimate its condition number."""
    for f in range(Z.shape[0]):
        A = Z[f][np.ix_(kept, kept)] + np.diag(load)
        try:
            X = np.linalg.solve(A, Z[f][np.ix_(kept, io_idx)])
            ok = np.isfinite(X).all()
        except np.linalg.LinAlgError:
            ok = False
        if not ok:
            with np.errstate(all="ignore"):
                cond = float(np.linalg.cond(A)) if np.isfinite(A).all() else float("inf")
            return SingularSystem(float(freqs[f]), cond)
    return SingularSystem(detail="non-finite result")


def reduce(partitioned: PartitionedPrior, loads: LoadAssignment) -> NetworkResponse:
    """Evaluate the reduction at every prior frequency for one load assignment."""
    if loads.io != partitioned.io or not np.array_equal(loads.vp_index, partitioned.vp_index):
        raise DimensionMismatch("load assignment is not keyed like the partition's non-I/O ports")
    prior = partitioned.prior
    io_idx = partitioned.io_index
    live = loads.state != OPEN
    kept = np.ascontiguousarray(loads.vp_index[live], dtype=np.int64)
    load = np.where(loads.state[live] == FINITE, loads.z[live], 0).astype(np.complex128)
    try:
        with np.errstate(all="ignore"):
            out = kernels.schur_sweep(prior.Z, io_idx, kept, load)
    except (np.linalg.LinAlgError, ZeroDivisionError):
        raise _diagnose(prior.Z, io_idx, kept, load, prior.freqs) from None
    if not np.isfinite(out).all():
        raise _diagnose(prior.Z, io_idx, kept, load, prior.freqs)
    return NetworkResponse(partitioned.io, prior.freqs, out, "Z", system_dim=int(kept.size))


def z_to_s(resp: NetworkResponse, ref_ohms: float = DEFAULT_REF_OHMS) -> NetworkResponse:
    if resp.representation != "Z":
        raise RepresentationMismatch("z_to_s expects a Z response")
    if not ref_ohms > 0:
        raise MalformedInput("reference impedance must be positive")
    try:
        S = z_to_s_matrices(resp.data, ref_ohms)
    except np.linalg.LinAlgError:
        raise SingularSystem(detail="Z + z0 I is singular") from None
    return NetworkResponse(resp.io, resp.freqs, S, "S", ref_ohms, resp.system_dim)


def s_to_z(resp: NetworkResponse, ref_ohms: float | None = None) -> NetworkResponse:
    if resp.representation != "S":
        raise RepresentationMismatch("s_to_z expects an S response")
    z0 = resp.ref_ohms if ref_ohms is None else ref_ohms
    if not z0 > 0:
        raise MalformedInput("reference impedance must be positive")
    try:
        Z = s_to_z_matrices(resp.data, z0)
    except np.linalg.LinAlgError:
        raise SingularSystem(detail="I - S is singular") from None
    return NetworkResponse(resp.io, resp.freqs, Z, "Z", z0, resp.system_dim)


def evaluate(prior: PriorData, pattern: PixelPattern, io, via_z: complex = 0, *,
             allow_any_io: bool = False) -> NetworkResponse:
    """partition -> map_to_loads -> reduce, returning the I/O impedance response."""
    loads = map_to_loads(pattern, prior.topo, io, via_z, allow_any_io)
    return reduce(partition(prior, loads.io), loads)


def _evaluate_slice(prior, loads, part, f0, f1):
    if f0 == 0 and f1 == prior.freqs.size:
        return reduce(part, loads)
    sub = PriorData(prior.topo, prior.freqs[f0:f1], prior.Z[f0:f1], prior.reciprocal)
    return reduce(PartitionedPrior(sub, part.io, part.vp_index), loads)


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("MAPES_JOBS", "1")))
    except ValueError:
        return 1


def evaluate_batch(prior: PriorData, patterns: Sequence[PixelPattern], io, via_z: complex = 0, *,
                   jobs: int | None = None, allow_any_io: bool = False) -> list[NetworkResponse]:
    """Evaluate many patterns on a bounded thread pool; output order follows input order.

    Work items are (pattern, frequency-range) pairs. When there are fewer
    patterns than workers the sweep is split so all workers stay busy.
    Each item is computed exactly as in the serial path, so results do not
    depend on ``jobs``.
    """
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    loads = [map_to_loads(p, prior.topo, io, via_z, allow_any_io) for p in patterns]
    if not loads:
        return []
    part = partition(prior, loads[0].io)
    F = prior.freqs.size
    n_split = 1 if len(loads) >= jobs else min(F, -(-jobs // len(loads)))
    edges = np.linspace(0, F, n_split + 1).round().astype(int)
    items = [(k, int(edges[s]), int(edges[s + 1])) for k in range(len(loads)) for s in range(n_split)
             if edges[s + 1] > edges[s]]

    def run(item):
        k, f0, f1 = item
        return _evaluate_slice(prior, loads[k], part, f0, f1)

    if jobs == 1:
        pieces = [run(it) for it in items]
    else:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1, user_api="blas"), ThreadPoolExecutor(max_workers=jobs) as ex:
            pieces = list(ex.map(run, items))
    if n_split == 1:
        return pieces
    out = []
    per = len(items) // len(loads)
    for k in range(len(loads)):
        chunk = pieces[k * per:(k + 1) * per]
        out.append(NetworkResponse(chunk[0].io, prior.freqs,
                                   np.concatenate([c.data for c in chunk], axis=0), "Z",
                                   system_dim=chunk[0].system_dim))
    return out
