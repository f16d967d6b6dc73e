"""Synthetic lumped networks over the virtual-pixel graph, plus a nodal-analysis oracle.

Every pixel and every diagonal virtual pixel is a node with a lossy shunt
``G + jwC`` to ground. Each virtual port p interrupts a series branch
``R_p + jwL_p``: its terminals are ``node_a`` and an internal node ``m_p``,
and ``m_p`` reaches ``node_b`` through the branch. With all ports open the
port impedance matrix is therefore

    Z_ALL = B^T Y0^-1 B + diag(R + jwL)

where ``Y0`` is the nodal admittance of the shunts (and optional parasitic
couplings) and ``B`` the node/port incidence. Element values are test
scaffolding, not a model of any real process.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DimensionMismatch, MalformedInput, SingularSystem
from .pattern import FINITE, OPEN, SHORT, IoSelection, LoadAssignment, PixelPattern, as_io
from .prior_io import PriorData
from .solver import NetworkResponse
from .topology import GROUND, DesignSpace, PortClass, PortTopology, enumerate_ports

NETWORK_FORMAT = "mapes-synthetic-network/1"


@dataclass(frozen=True)
class SynthParams:
    r_range: tuple[float, float] = (0.05, 0.5)
    l_range: tuple[float, float] = (0.1e-9, 1e-9)
    c_range: tuple[float, float] = (5e-15, 50e-15)
    g_range: tuple[float, float] = (1e-6, 1e-4)
    parasitics: bool = False
    # coupling between same-layer pixels two steps apart (Chebyshev distance 2)
    parasitic_c_range: tuple[float, float] = (0.1e-15, 1e-15)
    parasitic_g_range: tuple[float, float] = (1e-8, 1e-7)

    def __post_init__(self):
        for name in ("r_range", "l_range", "c_range", "g_range", "parasitic_c_range", "parasitic_g_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise MalformedInput(f"{name} must satisfy 0 < low <= high, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass(frozen=True, eq=False)
class SyntheticNetwork:
    topo: PortTopology
    seed: int
    params: SynthParams
    shunt_g: np.ndarray
    shunt_c: np.ndarray
    port_r: np.ndarray
    port_l: np.ndarray
    port_a: np.ndarray
    port_b: np.ndarray
    cpl_a: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cpl_b: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cpl_g: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cpl_c: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def space(self) -> DesignSpace:
        return self.topo.space

    @property
    def n_nodes(self) -> int:
        return self.shunt_g.size

    def port_z(self, omega: np.ndarray) -> np.ndarray:
        """(F, Q) series-branch impedance of every port."""
        return self.port_r[None, :] + 1j * np.outer(omega, self.port_l)

    def flipped(self, ports) -> "SyntheticNetwork":
        """Same network with the terminal orientation of ``ports`` reversed."""
        a, b = self.port_a.copy(), self.port_b.copy()
        idx = np.asarray(list(ports), dtype=np.int64)
        a[idx], b[idx] = self.port_b[idx], self.port_a[idx]
        return SyntheticNetwork(self.topo, self.seed, self.params, self.shunt_g, self.shunt_c,
                                self.port_r, self.port_l, a, b,
                                self.cpl_a, self.cpl_b, self.cpl_g, self.cpl_c)

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        sp = self.space
        name = sp.node_name
        return {
            "format": NETWORK_FORMAT,
            "rows": sp.rows,
            "cols": sp.cols,
            "layers": sp.layers,
            "has_vias": sp.has_vias,
            "seed": self.seed,
            "params": asdict(self.params),
            "nodes": [name(k) for k in range(self.n_nodes)],
            "shunts": [[name(k), float(g), float(c)] for k, (g, c) in enumerate(zip(self.shunt_g, self.shunt_c))],
            "couplings": [
                [name(int(a)), name(int(b)), float(g), float(c)]
                for a, b, g, c in zip(self.cpl_a, self.cpl_b, self.cpl_g, self.cpl_c)
            ],
            "ports": [
                [k, name(int(a)), name(int(b)), float(r), float(l)]
                for k, (a, b, r, l) in enumerate(zip(self.port_a, self.port_b, self.port_r, self.port_l))
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def network_from_dict(d: dict) -> SyntheticNetwork:
    if d.get("format") != NETWORK_FORMAT:
        raise MalformedInput(f"not a {NETWORK_FORMAT} document")
    space = DesignSpace(d["rows"], d["cols"], d["layers"], d["has_vias"])
    topo = enumerate_ports(space)
    node = space.node_from_name
    params = SynthParams(**{k: tuple(v) if isinstance(v, list) else v for k, v in d["params"].items()})
    if len(d["shunts"]) != space.n_nodes or len(d["ports"]) != topo.Q:
        raise DimensionMismatch("network document does not match its design space")
    shunts = sorted(d["shunts"], key=lambda s: node(s[0]))
    ports = sorted(d["ports"], key=lambda p: p[0])
    cpl = d.get("couplings", [])
    return SyntheticNetwork(
        topo, int(d["seed"]), params,
        np.array([s[1] for s in shunts], dtype=float),
        np.array([s[2] for s in shunts], dtype=float),
        np.array([p[3] for p in ports], dtype=float),
        np.array([p[4] for p in ports], dtype=float),
        np.array([node(p[1]) for p in ports], dtype=np.int64),
        np.array([node(p[2]) for p in ports], dtype=np.int64),
        np.array([node(c[0]) for c in cpl], dtype=np.int64),
        np.array([node(c[1]) for c in cpl], dtype=np.int64),
        np.array([c[2] for c in cpl], dtype=float),
        np.array([c[3] for c in cpl], dtype=float),
    )


def load_network(path) -> SyntheticNetwork:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{path}: {exc}") from None
    return network_from_dict(d)


def _parasitic_pairs(space: DesignSpace) -> list[tuple[int, int]]:
    pairs = []
    M, N = space.rows, space.cols
    for l in range(1, space.layers + 1):
        for i in range(M):
            for j in range(N):
                for di in range(0, 3):
                    for dj in range(-2, 3):
                        if max(abs(di), abs(dj)) != 2 or (di == 0 and dj < 0):
                            continue
                        i2, j2 = i + di, j + dj
                        if 0 <= i2 < M and 0 <= j2 < N:
                            pairs.append((space.pixel_node(i, j, l), space.pixel_node(i2, j2, l)))
    return pairs


def generate(topo: PortTopology, params: SynthParams | None = None, seed: int = 0) -> SyntheticNetwork:
    params = params or SynthParams()
    rng = np.random.default_rng(seed)
    n = topo.space.n_nodes
    Q = topo.Q
    shunt_g = rng.uniform(*params.g_range, size=n)
    shunt_c = rng.uniform(*params.c_range, size=n)
    port_r = rng.uniform(*params.r_range, size=Q)
    port_l = rng.uniform(*params.l_range, size=Q)
    extra = {}
    if params.parasitics:
        pairs = np.array(_parasitic_pairs(topo.space), dtype=np.int64).reshape(-1, 2)
        extra = dict(
            cpl_a=pairs[:, 0].copy(),
            cpl_b=pairs[:, 1].copy(),
            cpl_g=rng.uniform(*params.parasitic_g_range, size=len(pairs)),
            cpl_c=rng.uniform(*params.parasitic_c_range, size=len(pairs)),
        )
    return SyntheticNetwork(topo, int(seed), params, shunt_g, shunt_c, port_r, port_l,
                            np.array(topo.node_a), np.array(topo.node_b), **extra)


def _background_branches(net: SyntheticNetwork, omega: np.ndarray):
    n = net.n_nodes
    a = np.concatenate([np.arange(n), net.cpl_a])
    b = np.concatenate([np.full(n, GROUND), net.cpl_b])
    y = np.concatenate(
        [net.shunt_g[None, :] + 1j * np.outer(omega, net.shunt_c),
         net.cpl_g[None, :] + 1j * np.outer(omega, net.cpl_c)],
        axis=1,
    )
    return a.astype(np.int64), b.astype(np.int64), y


def background_admittance(net: SyntheticNetwork, freqs) -> np.ndarray:
    """(F, n, n) nodal admittance with every port open."""
    omega = 2 * np.pi * np.asarray(freqs, dtype=float)
    a, b, y = _background_branches(net, omega)
    return kernels.stamp_branches(net.n_nodes, a, b, y)


def extract_prior(net: SyntheticNetwork, freqs) -> PriorData:
    """Open-circuit impedance matrix of all virtual ports at each frequency.

    Column p is the port-voltage response to a unit current driven into
    ``port_a[p]`` and out of the port's internal node.
    """
    freqs = np.asarray(freqs, dtype=float).reshape(-1)
    omega = 2 * np.pi * freqs
    n, Q = net.n_nodes, net.topo.Q
    Y0 = background_admittance(net, freqs)
    # ground row appended as zeros so GROUND (-1) indexes it
    a, b = net.port_a, net.port_b
    zbranch = net.port_z(omega)
    Z = np.empty((freqs.size, Q, Q), dtype=np.complex128)
    for f in range(freqs.size):
        try:
            Yinv = np.linalg.inv(Y0[f])
        except np.linalg.LinAlgError:
            raise SingularSystem(float(freqs[f]), detail="background nodal matrix") from None
        pad = np.zeros((n + 1, n + 1), dtype=np.complex128)
        pad[:n, :n] = Yinv
        Zf = Z[f]
        Zf[...] = pad[np.ix_(a, a)]
        Zf -= pad[np.ix_(a, b)]
        Zf -= pad[np.ix_(b, a)]
        Zf += pad[np.ix_(b, b)]
        Zf[np.arange(Q), np.arange(Q)] += zbranch[f]
    return PriorData(net.topo, freqs, Z, reciprocal=True)


# --------------------------------------------------------------------------
# Oracle
# --------------------------------------------------------------------------

def _pixel_present(pattern: PixelPattern, space: DesignSpace, node: int) -> bool:
    if node == GROUND or node >= space.n_pixel_nodes:
        return True
    layer, rem = divmod(node, space.rows * space.cols)
    i, j = divmod(rem, space.cols)
    return bool(pattern.data[i, j, layer])


def oracle_port_states(net: SyntheticNetwork, pattern: PixelPattern, io: IoSelection, via_z: complex = 0):
    """Per-port (state, z) read straight off the pattern, one port at a time."""
    topo, space = net.topo, net.space
    L = space.layers
    io_set = set(io.ports)
    states = {}
    for p in topo.ports:
        if p.index in io_set:
            continue
        if p.cls == PortClass.GROUND:
            states[p.index] = (OPEN, 0j)
        elif p.cls == PortClass.VIA:
            if pattern.data[p.anchor_i, p.anchor_j, L + p.layer - 1]:
                states[p.index] = (SHORT, 0j) if via_z == 0 else (FINITE, complex(via_z))
            else:
                states[p.index] = (OPEN, 0j)
        else:
            both = _pixel_present(pattern, space, p.node_a) and _pixel_present(pattern, space, p.node_b)
            states[p.index] = (SHORT, 0j) if both else (OPEN, 0j)
    return states


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            # smaller id wins so the ground sentinel never becomes a child of a
            # non-ground root after relabelling; any choice is valid
            if rx < ry:
                self.parent[ry] = rx
            else:
                self.parent[rx] = ry


def loaded_nodal_system(net: SyntheticNetwork, io: IoSelection, states: dict, freqs, merge_order=None):
    """Nodal matrix of the loaded network and the I/O excitation matrix.

    Short loads collapse the port's two terminals into one node; Finite
    loads get an MNA branch-current unknown ``i`` with ``V_a - V_m = z i``
    (well conditioned as z -> 0, unlike stamping ``1/z``); Open ports are
    left unconnected, so their internal node (and branch) drops out.
    Returns ``(Y, B)`` with Y (F, nn + nf, nn + nf) and B (nn + nf, K).
    """
    omega = 2 * np.pi * np.asarray(freqs, dtype=float).reshape(-1)
    n, Q = net.n_nodes, net.topo.Q
    gnd = n + Q
    uf = _UnionFind(n + Q + 1)

    def term(node):
        return gnd if node == GROUND else node

    shorts = [p for p, (s, _) in states.items() if s == SHORT]
    if merge_order is not None:
        shorts = [shorts[k] for k in merge_order]
    for p in shorts:
        uf.union(term(int(net.port_a[p])), n + p)

    used = list(io.ports) + [p for p, (s, _) in states.items() if s != OPEN]
    used_set = set(used)
    for p in range(Q):
        if p not in used_set and p not in states:
            raise DimensionMismatch(f"port {p} has neither a load nor an I/O role")

    # relabel roots to 0..nn-1, ground -> -1
    gnd_root = uf.find(gnd)
    label = {}
    nodes_needed = list(range(n)) + [n + p for p in used]

    def lab(x):
        r = uf.find(x)
        if r == gnd_root:
            return GROUND
        if r not in label:
            label[r] = len(label)
        return label[r]

    for x in nodes_needed:
        lab(x)
    nn = len(label)

    bg_a, bg_b, bg_y = _background_branches(net, omega)
    br_a = [lab(term(int(x))) for x in bg_a]
    br_b = [lab(term(int(x))) for x in bg_b]
    ys = [bg_y]
    zb = net.port_z(omega)
    finite = []
    for p in used:
        br_a.append(lab(n + p))
        br_b.append(lab(term(int(net.port_b[p]))))
        ys.append((1.0 / zb[:, p])[:, None])
        s, z = states.get(p, (None, 0j))
        if s == FINITE:
            finite.append((lab(term(int(net.port_a[p]))), lab(n + p), z))
    Yn = kernels.stamp_branches(nn, np.array(br_a, dtype=np.int64), np.array(br_b, dtype=np.int64),
                                np.concatenate(ys, axis=1))
    nf = len(finite)
    Y = np.zeros((omega.size, nn + nf, nn + nf), dtype=np.complex128)
    Y[:, :nn, :nn] = Yn
    for r, (ia, im, z) in enumerate(finite):
        c = nn + r
        for node, sign in ((ia, 1.0), (im, -1.0)):
            if node >= 0:
                Y[:, node, c] = sign
                Y[:, c, node] = sign
        Y[:, c, c] = -z
    B = np.zeros((nn + nf, io.K), dtype=np.complex128)
    for k, p in enumerate(io.ports):
        ia, im = lab(term(int(net.port_a[p]))), lab(n + p)
        if ia >= 0:
            B[ia, k] += 1.0
        if im >= 0:
            B[im, k] -= 1.0
    return Y, B


def oracle_solve(net: SyntheticNetwork, pattern: PixelPattern | None, io, via_z: complex = 0, freqs=None, *,
                 loads: LoadAssignment | None = None, allow_any_io: bool = False,
                 merge_order=None) -> NetworkResponse:
    """Brute-force K-port impedance of the physically loaded network.

    Pass ``loads`` to impose an explicit assignment instead of deriving it
    from ``pattern``.
    """
    if freqs is None:
        freqs = net.space.freq_grid
    freqs = np.asarray(freqs, dtype=float).reshape(-1)
    io = as_io(io, net.topo, allow_any_io)
    if loads is not None:
        if loads.io != io:
            raise DimensionMismatch("explicit loads were built for a different I/O selection")
        states = {int(p): (int(s), complex(z)) for p, s, z in zip(loads.vp_index, loads.state, loads.z)}
    else:
        if pattern is None:
            raise MalformedInput("oracle_solve needs a pattern or explicit loads")
        if pattern.space.shape != net.space.shape or pattern.space.has_vias != net.space.has_vias:
            raise DimensionMismatch("pattern and network design spaces differ")
        states = oracle_port_states(net, pattern, io, via_z)
    Y, B = loaded_nodal_system(net, io, states, freqs, merge_order)
    out = np.empty((freqs.size, io.K, io.K), dtype=np.complex128)
    for f in range(freqs.size):
        try:
            X = np.linalg.solve(Y[f], B)
        except np.linalg.LinAlgError:
            raise SingularSystem(float(freqs[f]), detail="loaded nodal matrix") from None
        out[f] = B.T @ X
    if not np.isfinite(out).all():
        raise SingularSystem(detail="oracle produced non-finite values")
    return NetworkResponse(io, freqs, out, "Z")
