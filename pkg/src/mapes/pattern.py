"""Pixel/via patterns and their translation into virtual-port loads."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, MalformedInput, ViaConstraintViolation
from .topology import DesignSpace, PortClass, PortTopology

SHORT, OPEN, FINITE = 0, 1, 2
STATE_NAMES = {SHORT: "Short", OPEN: "Open", FINITE: "Finite"}


class ViaCoercionWarning(UserWarning):
    """Invalid vias were dropped while parsing a pattern in coerce mode."""


@dataclass(frozen=True, eq=False)
class PixelPattern:
    """Binary tensor of shape ``(rows, cols, 2*layers - 1)``.

    Slices ``0..L-1`` hold pixel presence per layer; slice ``L + k`` holds
    the vias between layers ``k+1`` and ``k+2``.
    """

    space: DesignSpace
    data: np.ndarray

    def __post_init__(self):
        M, N, L = self.space.shape
        data = np.asarray(self.data)
        if data.shape != (M, N, 2 * L - 1):
            raise DimensionMismatch(f"pattern shape {data.shape} != {(M, N, 2 * L - 1)}")
        if not np.isin(data, (0, 1)).all():
            raise MalformedInput("pattern entries must be 0 or 1")
        data = data.astype(np.uint8)
        if not self.space.has_vias and data[:, :, L:].any():
            raise MalformedInput("pattern sets vias but the design space has no via ports")
        bad = via_violations(data, L)
        if bad:
            raise ViaConstraintViolation(bad)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    def __eq__(self, other):
        if not isinstance(other, PixelPattern):
            return NotImplemented
        return self.space.shape == other.space.shape and np.array_equal(self.data, other.data)

    @property
    def pixels(self) -> np.ndarray:
        return self.data[:, :, : self.space.layers]

    @property
    def vias(self) -> np.ndarray:
        return self.data[:, :, self.space.layers:]

    def to_dict(self) -> dict:
        M, N, L = self.space.shape
        d = {
            "rows": M,
            "cols": N,
            "layers": L,
            "pixels": [self.pixels[:, :, l].tolist() for l in range(L)],
        }
        if L > 1:
            d["vias"] = [self.vias[:, :, k].tolist() for k in range(L - 1)]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def via_violations(data: np.ndarray, layers: int) -> list[tuple[int, int, int]]:
    """``(i, j, slice)`` of every via whose two pixels are not both present (0-based slice)."""
    if layers < 2:
        return []
    px = data[:, :, :layers].astype(bool)
    vias = data[:, :, layers:].astype(bool)
    ok = px[:, :, :-1] & px[:, :, 1:]
    bad = np.argwhere(vias & ~ok)
    return [(int(i), int(j), int(k) + layers) for i, j, k in bad]


def _coerce_data(data: np.ndarray, layers: int) -> np.ndarray:
    data = data.copy()
    if layers > 1:
        px = data[:, :, :layers].astype(bool)
        data[:, :, layers:] &= (px[:, :, :-1] & px[:, :, 1:]).astype(data.dtype)
    return data


def pattern_from_dict(d: dict, space: DesignSpace | None = None, coerce: bool = False) -> PixelPattern:
    try:
        M, N, L = int(d["rows"]), int(d["cols"]), int(d["layers"])
        pixels = np.asarray(d["pixels"])
        vias = d.get("vias")
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"pattern JSON: {exc}") from None
    if space is None:
        space = DesignSpace(M, N, L, has_vias=L > 1 and vias is not None)
    elif space.shape != (M, N, L):
        raise DimensionMismatch(f"pattern is {M}x{N}x{L}, design space is {space.shape}")
    if pixels.shape != (L, M, N):
        raise MalformedInput(f"'pixels' must be {L} arrays of {M}x{N}, got shape {pixels.shape}")
    data = np.zeros((M, N, 2 * L - 1), dtype=np.uint8)
    if not np.isin(pixels, (0, 1)).all():
        raise MalformedInput("pixel entries must be 0 or 1")
    data[:, :, :L] = np.moveaxis(pixels, 0, -1)
    if vias is not None and L > 1:
        vias = np.asarray(vias)
        if vias.shape != (L - 1, M, N):
            raise MalformedInput(f"'vias' must be {L - 1} arrays of {M}x{N}, got shape {vias.shape}")
        if not np.isin(vias, (0, 1)).all():
            raise MalformedInput("via entries must be 0 or 1")
        data[:, :, L:] = np.moveaxis(vias, 0, -1)
    if coerce:
        bad = via_violations(data, L)
        if bad:
            warnings.warn(f"dropped {len(bad)} via(s) over absent pixels: {bad[:5]}", ViaCoercionWarning, stacklevel=2)
            data = _coerce_data(data, L)
    return PixelPattern(space, data)


def parse_pattern(source, space: DesignSpace | None = None, coerce: bool = False) -> PixelPattern:
    """Parse a pattern from a JSON string, a dict, or a path to a JSON file."""
    if isinstance(source, dict):
        return pattern_from_dict(source, space, coerce)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith(("{", "["))):
        source = Path(source).read_text(encoding="utf-8")
    try:
        d = json.loads(source)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"pattern JSON: {exc}") from None
    if not isinstance(d, dict):
        raise MalformedInput("pattern JSON must be an object")
    return pattern_from_dict(d, space, coerce)


def iter_pattern_batch(path, space: DesignSpace | None = None, coerce: bool = False) -> Iterator[tuple[str, PixelPattern]]:
    """Yield ``(pattern_id, pattern)`` from a JSON file or a JSON-lines batch file."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if not stripped:
        return
    try:
        whole = json.loads(stripped)
    except json.JSONDecodeError:
        whole = None
    if isinstance(whole, dict):
        yield str(whole.get("id", 0)), pattern_from_dict(whole, space, coerce)
        return
    for n, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"{path}:{n + 1}: {exc}") from None
        yield str(d.get("id", n)), pattern_from_dict(d, space, coerce)


def random_pattern(space: DesignSpace, density: float, seed) -> PixelPattern:
    """I.i.d. Bernoulli(density) pixels; vias sampled the same way, then masked."""
    if not 0.0 <= density <= 1.0:
        raise MalformedInput(f"density must lie in [0, 1], got {density}")
    rng = np.random.default_rng(seed)
    M, N, L = space.shape
    data = np.zeros((M, N, 2 * L - 1), dtype=np.uint8)
    data[:, :, :L] = rng.random((M, N, L)) < density
    if L > 1:
        vias = rng.random((M, N, L - 1)) < density
        if space.has_vias:
            data[:, :, L:] = vias
            data = _coerce_data(data, L)
    return PixelPattern(space, data)


def full_pattern(space: DesignSpace, present: bool = True, vias: bool | None = None) -> PixelPattern:
    M, N, L = space.shape
    data = np.zeros((M, N, 2 * L - 1), dtype=np.uint8)
    data[:, :, :L] = int(present)
    if space.has_vias and (present if vias is None else vias):
        data[:, :, L:] = 1
    return PixelPattern(space, data)


@dataclass(frozen=True)
class IoSelection:
    ports: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ports", tuple(int(p) for p in self.ports))

    @property
    def K(self) -> int:
        return len(self.ports)

    def validate(self, topo: PortTopology, allow_any: bool = False) -> "IoSelection":
        Q = topo.Q
        if not 1 <= self.K < Q:
            raise MalformedInput(f"need 1 <= K < Q (K={self.K}, Q={Q})")
        if len(set(self.ports)) != self.K:
            raise MalformedInput(f"duplicate I/O ports in {self.ports}")
        for p in self.ports:
            if not 0 <= p < Q:
                raise MalformedInput(f"I/O port {p} out of range [0, {Q})")
            if not allow_any and topo.port_class[p] != PortClass.GROUND:
                raise MalformedInput(
                    f"I/O port {p} is a {PortClass(topo.port_class[p]).label} port; "
                    "only Ground ports are allowed unless allow_any is set"
                )
        return self


def as_io(io, topo: PortTopology, allow_any: bool = False) -> IoSelection:
    if not isinstance(io, IoSelection):
        io = IoSelection(tuple(io))
    return io.validate(topo, allow_any)


@dataclass(frozen=True, eq=False)
class LoadAssignment:
    """Loads on the ``Q - K`` non-I/O ports, keyed by original port index.

    ``vp_index`` is ascending; ``state[k]`` and ``z[k]`` belong to port
    ``vp_index[k]``. ``z`` is only meaningful where the state is Finite.
    """

    io: IoSelection
    vp_index: np.ndarray
    state: np.ndarray
    z: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, LoadAssignment):
            return NotImplemented
        return (
            self.io == other.io
            and np.array_equal(self.vp_index, other.vp_index)
            and np.array_equal(self.state, other.state)
            and np.array_equal(self.z, other.z)
        )

    def __len__(self):
        return len(self.vp_index)

    @property
    def permutation(self) -> np.ndarray:
        """Original port indices in reduced order: I/O ports first, then the rest."""
        return np.concatenate([np.asarray(self.io.ports, dtype=np.int64), self.vp_index])

    def as_dict(self) -> dict[int, tuple[str, complex]]:
        return {
            int(p): (STATE_NAMES[int(s)], complex(z))
            for p, s, z in zip(self.vp_index, self.state, self.z)
        }

    def counts(self) -> dict[str, int]:
        return {name: int(np.count_nonzero(self.state == k)) for k, name in STATE_NAMES.items()}

    @classmethod
    def from_states(cls, io: IoSelection, Q: int, states: Sequence[int], z: Iterable[complex] | None = None):
        """Explicit assignment over all non-I/O ports in ascending index order."""
        io_set = set(io.ports)
        vp = np.array([p for p in range(Q) if p not in io_set], dtype=np.int64)
        state = np.asarray(states, dtype=np.int8)
        if state.shape != vp.shape:
            raise DimensionMismatch(f"{state.shape[0]} load states for {vp.shape[0]} non-I/O ports")
        zz = np.zeros(vp.shape, dtype=np.complex128) if z is None else np.asarray(list(z), dtype=np.complex128)
        if zz.shape != vp.shape:
            raise DimensionMismatch("load impedance vector has the wrong length")
        return cls(io, vp, state, zz)


def port_states(pattern: PixelPattern, topo: PortTopology, via_z: complex = 0) -> tuple[np.ndarray, np.ndarray]:
    """Load state and impedance for all ``Q`` ports, ignoring the I/O choice.

    Ground ports are Open; edge and diagonal ports are Short unless a pixel
    endpoint is absent; via ports follow their via bit.
    """
    sp = topo.space
    if pattern.space.shape != sp.shape or pattern.space.has_vias != sp.has_vias:
        raise DimensionMismatch(
            f"pattern design space {pattern.space.shape} does not match topology {sp.shape}"
        )
    L = sp.layers
    # present[node] for pixel nodes; diagonal nodes and ground count as present
    present = np.ones(sp.n_nodes + 1, dtype=bool)
    present[: sp.n_pixel_nodes] = np.moveaxis(pattern.pixels, -1, 0).reshape(-1).astype(bool)
    cls = topo.port_class
    a, b = topo.node_a, topo.node_b
    state = np.full(topo.Q, OPEN, dtype=np.int8)
    z = np.zeros(topo.Q, dtype=np.complex128)

    intra = (cls == PortClass.HORIZONTAL) | (cls == PortClass.VERTICAL) | (cls == PortClass.DIAGONAL)
    connected = present[a] & present[b]
    state[intra & connected] = SHORT

    vias = np.flatnonzero(cls == PortClass.VIA)
    if vias.size:
        via_bits = np.moveaxis(pattern.vias, -1, 0).reshape(-1).astype(bool)
        # via ports are enumerated layer-pair-major then row-major, like via_bits
        on = vias[via_bits]
        if via_z == 0:
            state[on] = SHORT
        else:
            state[on] = FINITE
            z[on] = via_z
    return state, z


def map_to_loads(pattern: PixelPattern, topo: PortTopology, io, via_z: complex = 0,
                 allow_any_io: bool = False) -> LoadAssignment:
    io = as_io(io, topo, allow_any_io)
    state, z = port_states(pattern, topo, via_z)
    mask = np.ones(topo.Q, dtype=bool)
    mask[list(io.ports)] = False
    vp = np.flatnonzero(mask)
    st = state[vp]
    st.flags.writeable = False
    zz = z[vp]
    zz.flags.writeable = False
    vp.flags.writeable = False
    return LoadAssignment(io, vp, st, zz)
