"""Virtual-port enumeration for an L-layer M x N pixel design space.

Pixels are addressed 0-based as ``(i, j)`` (row, column) with layers
numbered ``1..L``. Ports are enumerated layer by layer; inside a layer the
class order is horizontal edges, vertical edges, diagonal ports, ground
ports, each row-major. Via ports for every adjacent layer pair follow all
layer blocks.

Node numbering (used by the synthetic network and by adjacency):
pixel nodes first, ``(l-1)*M*N + i*N + j``; then one diagonal node per
interior corner and layer; ground is ``-1``.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import MalformedInput

GROUND = -1


class PortClass(enum.IntEnum):
    HORIZONTAL = 0
    VERTICAL = 1
    DIAGONAL = 2
    GROUND = 3
    VIA = 4

    @property
    def label(self) -> str:
        return _CLASS_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "PortClass":
        try:
            return _LABEL_CLASSES[label]
        except KeyError:
            raise MalformedInput(f"unknown port class {label!r}") from None


_CLASS_LABELS = {
    PortClass.HORIZONTAL: "HorizontalEdge",
    PortClass.VERTICAL: "VerticalEdge",
    PortClass.DIAGONAL: "Diagonal",
    PortClass.GROUND: "Ground",
    PortClass.VIA: "Via",
}
_LABEL_CLASSES = {v: k for k, v in _CLASS_LABELS.items()}

# Order of the four diagonal ports around an interior corner, named by the
# corner of the endpoint pixel that touches the diagonal virtual pixel.
_DIAG_CORNERS = (("SE", 0, 0), ("SW", 0, 1), ("NE", 1, 0), ("NW", 1, 1))


@dataclass(frozen=True)
class DesignSpace:
    rows: int
    cols: int
    layers: int = 1
    has_vias: bool = False
    freq_grid: tuple[float, ...] = (1e9,)

    def __post_init__(self):
        for name in ("rows", "cols", "layers"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise MalformedInput(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.has_vias and self.layers < 2:
            raise MalformedInput("has_vias requires at least two layers")
        object.__setattr__(self, "has_vias", bool(self.has_vias))
        freqs = tuple(float(f) for f in np.atleast_1d(np.asarray(self.freq_grid, dtype=float)))
        if not freqs:
            raise MalformedInput("frequency grid is empty")
        if min(freqs) <= 0 or any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise MalformedInput("frequency grid must be positive and strictly increasing")
        object.__setattr__(self, "freq_grid", freqs)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.rows, self.cols, self.layers

    @property
    def n_pixel_nodes(self) -> int:
        return self.layers * self.rows * self.cols

    @property
    def n_diag_nodes(self) -> int:
        return self.layers * (self.rows - 1) * (self.cols - 1)

    @property
    def n_nodes(self) -> int:
        return self.n_pixel_nodes + self.n_diag_nodes

    def pixel_node(self, i: int, j: int, layer: int) -> int:
        return (layer - 1) * self.rows * self.cols + i * self.cols + j

    def diag_node(self, ci: int, cj: int, layer: int) -> int:
        return self.n_pixel_nodes + (layer - 1) * (self.rows - 1) * (self.cols - 1) + ci * (self.cols - 1) + cj

    def node_name(self, node: int) -> str:
        if node == GROUND:
            return "GND"
        if node < self.n_pixel_nodes:
            layer, rem = divmod(node, self.rows * self.cols)
            i, j = divmod(rem, self.cols)
            return f"P{layer + 1}_{i}_{j}"
        node -= self.n_pixel_nodes
        per = (self.rows - 1) * (self.cols - 1)
        layer, rem = divmod(node, per)
        ci, cj = divmod(rem, self.cols - 1)
        return f"D{layer + 1}_{ci}_{cj}"

    def node_from_name(self, name: str) -> int:
        if name == "GND":
            return GROUND
        try:
            kind, rest = name[0], name[1:]
            layer, i, j = (int(t) for t in rest.split("_"))
        except (ValueError, IndexError):
            raise MalformedInput(f"bad node name {name!r}") from None
        if kind == "P":
            return self.pixel_node(i, j, layer)
        if kind == "D":
            return self.diag_node(i, j, layer)
        raise MalformedInput(f"bad node name {name!r}")

    def with_freqs(self, freq_grid) -> "DesignSpace":
        return DesignSpace(self.rows, self.cols, self.layers, self.has_vias, tuple(freq_grid))


def count_ports(space: DesignSpace) -> int:
    """Closed-form virtual-port count, ``L(6MN-3M-3N+4)`` plus ``(L-1)MN`` with vias."""
    M, N, L = space.rows, space.cols, space.layers
    q = L * (6 * M * N - 3 * M - 3 * N + 4)
    if space.has_vias:
        q += (L - 1) * M * N
    return q


@dataclass(frozen=True)
class PortId:
    index: int
    cls: PortClass
    layer: int
    anchor_i: int
    anchor_j: int
    side: str
    node_a: int
    node_b: int


_SIDES = ("N", "E", "S", "W", "SE", "SW", "NE", "NW", "V")
_SIDE_CODE = {name: k for k, name in enumerate(_SIDES)}
PORT_DTYPE = np.dtype([("cls", "i1"), ("layer", "i2"), ("anchor_i", "i4"), ("anchor_j", "i4"),
                       ("side", "i1"), ("node_a", "i8"), ("node_b", "i8")])


@dataclass(frozen=True, eq=False)
class PortTopology:
    """Ordered virtual ports, stored column-wise in a structured array of :data:`PORT_DTYPE`."""

    space: DesignSpace
    table: np.ndarray

    def __post_init__(self):
        self.table.flags.writeable = False

    def __len__(self):
        return self.table.size

    def __eq__(self, other):
        if not isinstance(other, PortTopology):
            return NotImplemented
        return np.array_equal(self.table, other.table) and self.space.shape == other.space.shape and \
            self.space.has_vias == other.space.has_vias

    def __hash__(self):
        return hash(self.digest)

    @property
    def Q(self) -> int:
        return self.table.size

    @cached_property
    def ports(self) -> tuple[PortId, ...]:
        t = self.table
        return tuple(
            PortId(k, PortClass(c), int(l), int(i), int(j), _SIDES[sd], int(a), int(b))
            for k, (c, l, i, j, sd, a, b) in enumerate(zip(
                t["cls"].tolist(), t["layer"].tolist(), t["anchor_i"].tolist(), t["anchor_j"].tolist(),
                t["side"].tolist(), t["node_a"].tolist(), t["node_b"].tolist()))
        )

    @property
    def port_class(self) -> np.ndarray:
        return self.table["cls"]

    @property
    def node_a(self) -> np.ndarray:
        return self.table["node_a"]

    @property
    def node_b(self) -> np.ndarray:
        return self.table["node_b"]

    @cached_property
    def adjacency(self) -> dict[tuple[int, int, int], frozenset[int]]:
        """Ports touching each pixel ``(i, j, layer)``."""
        sp = self.space
        acc: dict[tuple[int, int, int], set[int]] = {
            (i, j, l): set()
            for l in range(1, sp.layers + 1) for i in range(sp.rows) for j in range(sp.cols)
        }
        npx = sp.n_pixel_nodes
        for p in self.ports:
            for node in (p.node_a, p.node_b):
                if 0 <= node < npx:
                    l, rem = divmod(node, sp.rows * sp.cols)
                    i, j = divmod(rem, sp.cols)
                    acc[(i, j, l + 1)].add(p.index)
        return {k: frozenset(v) for k, v in acc.items()}

    @cached_property
    def digest(self) -> str:
        """SHA-256 of the canonical port-map CSV; identifies priors built on this topology."""
        return hashlib.sha256(port_map_csv(self).encode("utf-8")).hexdigest()

    def indices_of(self, cls: PortClass) -> np.ndarray:
        return np.flatnonzero(self.port_class == cls)

    def ground_port(self, i: int, j: int, side: str, layer: int = 1) -> int:
        """Index of the ground port on the ``side`` edge of pixel ``(i, j)``."""
        try:
            return self._ground_lookup[(i, j, side, layer)]
        except KeyError:
            raise MalformedInput(f"no ground port at pixel ({i}, {j}) side {side} layer {layer}") from None

    @cached_property
    def _ground_lookup(self) -> dict[tuple[int, int, str, int], int]:
        return {
            (p.anchor_i, p.anchor_j, p.side, p.layer): p.index
            for p in self.ports if p.cls == PortClass.GROUND
        }


def enumerate_ports(space: DesignSpace) -> PortTopology:
    M, N, L = space.rows, space.cols, space.layers
    MN = M * N
    I, J = np.meshgrid(np.arange(M), np.arange(N), indexing="ij")
    pix = I * N + J
    # one layer-1 template as (cls, anchor_i, anchor_j, side, node_a, node_b, node_b offset kind)
    ci, cj = I[:-1, :-1, None], J[:-1, :-1, None]  # corner-major, then _DIAG_CORNERS order
    di = np.array([c[1] for c in _DIAG_CORNERS])
    dj = np.array([c[2] for c in _DIAG_CORNERS])
    di_i, di_j = (ci + di).ravel(), (cj + dj).ravel()
    dnode = np.repeat((space.n_pixel_nodes + ci * (N - 1) + cj).ravel(), 4)
    gi, gj, gs = np.nonzero(np.stack([I == 0, J == N - 1, I == M - 1, J == 0], axis=-1))  # N, E, S, W
    counts = (M * (N - 1), (M - 1) * N, 4 * (M - 1) * (N - 1), gi.size)
    cls = np.repeat(np.array([PortClass.HORIZONTAL, PortClass.VERTICAL, PortClass.DIAGONAL, PortClass.GROUND]),
                    counts)
    ai = np.concatenate([I[:, :-1].ravel(), I[:-1].ravel(), di_i, gi])
    aj = np.concatenate([J[:, :-1].ravel(), J[:-1].ravel(), di_j, gj])
    side = np.concatenate([np.full(counts[0], _SIDE_CODE["E"]), np.full(counts[1], _SIDE_CODE["S"]),
                           np.tile([_SIDE_CODE[c[0]] for c in _DIAG_CORNERS], counts[2] // 4), gs])
    na = ai * N + aj
    nb = np.concatenate([pix[:, 1:].ravel(), pix[1:].ravel(), dnode, np.full(gi.size, GROUND)])
    nb_step = np.repeat([MN, MN, (M - 1) * (N - 1), 0], counts)

    per = cls.size
    n_via = (L - 1) * MN if space.has_vias else 0
    out = np.empty(L * per + n_via, dtype=PORT_DTYPE)
    lay = np.arange(L)
    out["cls"][:L * per] = np.tile(cls, L)
    out["layer"][:L * per] = np.repeat(lay + 1, per)
    out["anchor_i"][:L * per] = np.tile(ai, L)
    out["anchor_j"][:L * per] = np.tile(aj, L)
    out["side"][:L * per] = np.tile(side, L)
    out["node_a"][:L * per] = (na[None, :] + MN * lay[:, None]).ravel()
    out["node_b"][:L * per] = (nb[None, :] + nb_step[None, :] * lay[:, None]).ravel()
    if n_via:
        v = out[L * per:]
        v["cls"], v["side"] = PortClass.VIA, _SIDE_CODE["V"]
        v["layer"] = np.repeat(lay[:-1] + 1, MN)
        v["anchor_i"], v["anchor_j"] = np.tile(I.ravel(), L - 1), np.tile(J.ravel(), L - 1)
        v["node_a"] = (pix.ravel()[None, :] + MN * lay[:-1, None]).ravel()
        v["node_b"] = v["node_a"] + MN
    return PortTopology(space, out)


PORT_MAP_HEADER = ("index", "class", "layer", "anchor_i", "anchor_j", "side", "node_a", "node_b")


def port_map_csv(topo: PortTopology) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PORT_MAP_HEADER)
    name = topo.space.node_name
    for p in topo.ports:
        w.writerow((p.index, p.cls.label, p.layer, p.anchor_i, p.anchor_j, p.side, name(p.node_a), name(p.node_b)))
    return buf.getvalue()


def export_port_map(topo: PortTopology, path) -> None:
    Path(path).write_text(port_map_csv(topo), encoding="utf-8", newline="")


def parse_port_map(text: str, space: DesignSpace) -> PortTopology:
    """Rebuild a topology from port-map CSV text.

    The design space is needed to decode node names; the rows are taken as
    written, so a hand-edited map is honoured.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != PORT_MAP_HEADER:
        raise MalformedInput("port map header mismatch")
    ports = []
    for k, r in enumerate(rows[1:]):
        if len(r) != len(PORT_MAP_HEADER):
            raise MalformedInput(f"port map row {k + 1} has {len(r)} fields")
        try:
            idx, layer, ai, aj = int(r[0]), int(r[2]), int(r[3]), int(r[4])
        except ValueError:
            raise MalformedInput(f"port map row {k + 1}: non-integer field") from None
        if idx != k:
            raise MalformedInput(f"port map row {k + 1}: index {idx} out of sequence")
        if r[5] not in _SIDE_CODE:
            raise MalformedInput(f"port map row {k + 1}: unknown side {r[5]!r}")
        ports.append((PortClass.from_label(r[1]), layer, ai, aj, _SIDE_CODE[r[5]],
                      space.node_from_name(r[6]), space.node_from_name(r[7])))
    return PortTopology(space, np.array(ports, dtype=PORT_DTYPE))


def read_port_map(path, space: DesignSpace) -> PortTopology:
    return parse_port_map(Path(path).read_text(encoding="utf-8"), space)


def class_counts(topo: PortTopology) -> dict[str, int]:
    counts = np.bincount(topo.port_class, minlength=len(PortClass))
    return {c.label: int(counts[c]) for c in PortClass}


def io_from_descriptors(topo: PortTopology, items: Sequence[str]) -> list[int]:
    """Resolve ``"17"`` (index) or ``"i:j:SIDE[@layer]"`` (ground port) descriptors."""
    out = []
    for item in items:
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            try:
                out.append(int(item))
            except ValueError:
                raise MalformedInput(f"bad I/O port descriptor {item!r}") from None
            continue
        body, _, layer = item.partition("@")
        try:
            i, j, side = body.split(":")
            out.append(topo.ground_port(int(i), int(j), side.upper(), int(layer) if layer else 1))
        except ValueError:
            raise MalformedInput(f"bad I/O port descriptor {item!r}") from None
    return out
