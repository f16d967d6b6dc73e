import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapes.errors import DimensionMismatch, MalformedInput, ViaConstraintViolation
from mapes.pattern import (
    FINITE,
    OPEN,
    SHORT,
    IoSelection,
    PixelPattern,
    ViaCoercionWarning,
    full_pattern,
    iter_pattern_batch,
    map_to_loads,
    parse_pattern,
    random_pattern,
)
from mapes.topology import DesignSpace, PortClass, enumerate_ports


def _json(rows, cols, layers, pixels, vias=None):
    d = {"rows": rows, "cols": cols, "layers": layers, "pixels": pixels}
    if vias is not None:
        d["vias"] = vias
    return json.dumps(d)


def test_parse_all_ones():
    p = parse_pattern(_json(3, 3, 1, [[[1] * 3] * 3]))
    assert p.data.shape == (3, 3, 1)
    assert int(p.data.sum()) == 9


def test_parse_rejects_via_over_absent_pixel():
    px = [[[1, 1], [1, 1]], [[1, 0], [1, 1]]]
    vias = [[[0, 1], [0, 0]]]
    with pytest.raises(ViaConstraintViolation) as exc:
        parse_pattern(_json(2, 2, 2, px, vias))
    assert exc.value.offending == [(0, 1, 2)]


def test_parse_coerce_drops_invalid_via():
    px = [[[1, 1], [1, 1]], [[1, 0], [1, 1]]]
    vias = [[[1, 1], [0, 0]]]
    with pytest.warns(ViaCoercionWarning):
        p = parse_pattern(_json(2, 2, 2, px, vias), coerce=True)
    assert p.vias[:, :, 0].tolist() == [[1, 0], [0, 0]]


@pytest.mark.parametrize(
    "text",
    [
        "{not json",
        '{"rows": 2, "cols": 2}',
        _json(2, 2, 1, [[[1, 1]]]),
        _json(2, 2, 1, [[[1, 2], [0, 0]]]),
        "[1, 2]",
    ],
)
def test_parse_malformed(text):
    with pytest.raises(MalformedInput):
        parse_pattern(text)


def test_parse_missing_file_is_io_error(tmp_path):
    with pytest.raises(OSError):
        parse_pattern(tmp_path / "nope.json")


def test_parse_space_mismatch():
    with pytest.raises(DimensionMismatch):
        parse_pattern(_json(2, 2, 1, [[[1, 1], [1, 1]]]), space=DesignSpace(3, 3, 1))


def test_pattern_json_round_trip(tmp_path):
    sp = DesignSpace(4, 3, 3, True)
    p = random_pattern(sp, 0.7, 3)
    assert parse_pattern(p.to_json(), sp) == p
    f = tmp_path / "p.json"
    f.write_text(p.to_json())
    assert parse_pattern(f, sp) == p


def test_batch_file(tmp_path):
    sp = DesignSpace(3, 3, 1)
    pats = [random_pattern(sp, 0.5, s) for s in range(5)]
    f = tmp_path / "batch.jsonl"
    f.write_text("".join(p.to_json() + "\n" for p in pats))
    got = list(iter_pattern_batch(f, sp))
    assert [pid for pid, _ in got] == ["0", "1", "2", "3", "4"]
    assert all(a == b for (_, a), b in zip(got, pats))


def test_random_pattern_extremes_and_determinism():
    sp = DesignSpace(5, 6, 2, True)
    assert random_pattern(sp, 1.0, 0).data.all()
    assert not random_pattern(sp, 0.0, 0).data.any()
    assert random_pattern(sp, 0.4, 42) == random_pattern(sp, 0.4, 42)
    assert random_pattern(sp, 0.4, 42) != random_pattern(sp, 0.4, 43)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_random_pattern_respects_via_constraint(rho, seed):
    sp = DesignSpace(4, 4, 3, True)
    p = random_pattern(sp, rho, seed)  # construction would raise on a violation
    px = p.pixels.astype(bool)
    assert not (p.vias.astype(bool) & ~(px[:, :, :-1] & px[:, :, 1:])).any()


# -- load mapping -----------------------------------------------------------

def _g0(topo):
    return [int(topo.indices_of(PortClass.GROUND)[0])]


def test_loads_all_present_3x3():
    sp = DesignSpace(3, 3, 1)
    topo = enumerate_ports(sp)
    la = map_to_loads(full_pattern(sp), topo, _g0(topo))
    assert len(la) == 39
    assert la.counts() == {"Short": 28, "Open": 11, "Finite": 0}
    shorts = la.vp_index[la.state == SHORT]
    assert {PortClass(topo.port_class[p]) for p in shorts} == {
        PortClass.HORIZONTAL, PortClass.VERTICAL, PortClass.DIAGONAL}


def test_loads_all_absent_3x3():
    sp = DesignSpace(3, 3, 1)
    topo = enumerate_ports(sp)
    la = map_to_loads(full_pattern(sp, present=False), topo, _g0(topo))
    assert la.counts() == {"Short": 0, "Open": 39, "Finite": 0}


def test_loads_corner_pixel_absent():
    sp = DesignSpace(3, 3, 1)
    topo = enumerate_ports(sp)
    io = _g0(topo)
    data = np.ones((3, 3, 1), dtype=np.uint8)
    data[0, 0, 0] = 0
    before = map_to_loads(full_pattern(sp), topo, io).as_dict()
    after = map_to_loads(PixelPattern(sp, data), topo, io).as_dict()
    flipped = {p for p in before if before[p][0] != after[p][0]}
    # by hand: H port (0,0)-(0,1) is index 0, V port (0,0)-(1,0) is 6,
    # the diagonal port joining pixel (0,0) to corner (0,0) is 12
    assert flipped == {0, 6, 12}
    assert all(before[p][0] == "Short" and after[p][0] == "Open" for p in flipped)


def test_via_loads():
    sp = DesignSpace(2, 2, 2, True)
    topo = enumerate_ports(sp)
    io = _g0(topo)
    data = np.ones((2, 2, 3), dtype=np.uint8)
    data[1, 1, 2] = 0
    pat = PixelPattern(sp, data)
    vias = topo.indices_of(PortClass.VIA)
    la = map_to_loads(pat, topo, io).as_dict()
    assert [la[int(v)][0] for v in vias] == ["Short", "Short", "Short", "Open"]
    lz = map_to_loads(pat, topo, io, via_z=0.2 + 0.01j).as_dict()
    assert [lz[int(v)] for v in vias[:3]] == [("Finite", 0.2 + 0.01j)] * 3
    assert lz[int(vias[3])][0] == "Open"
    finite = [p for p, (s, _) in lz.items() if s == "Finite"]
    assert all(topo.port_class[p] == PortClass.VIA for p in finite)


def test_io_validation():
    sp = DesignSpace(3, 3, 1)
    topo = enumerate_ports(sp)
    pat = full_pattern(sp)
    with pytest.raises(MalformedInput):
        map_to_loads(pat, topo, [0])  # an edge port
    assert map_to_loads(pat, topo, [0], allow_any_io=True).io.ports == (0,)
    g = _g0(topo)[0]
    with pytest.raises(MalformedInput):
        map_to_loads(pat, topo, [g, g])
    with pytest.raises(MalformedInput):
        map_to_loads(pat, topo, [])
    with pytest.raises(MalformedInput):
        map_to_loads(pat, topo, [topo.Q])


def test_dimension_mismatch():
    topo = enumerate_ports(DesignSpace(3, 3, 1))
    with pytest.raises(DimensionMismatch):
        map_to_loads(full_pattern(DesignSpace(2, 3, 1)), topo, _g0(topo))


def test_permutation_puts_io_first():
    sp = DesignSpace(3, 3, 1)
    topo = enumerate_ports(sp)
    g = topo.indices_of(PortClass.GROUND)
    io = [int(g[5]), int(g[1])]
    perm = map_to_loads(full_pattern(sp), topo, io).permutation
    assert perm[:2].tolist() == io
    assert sorted(perm.tolist()) == list(range(topo.Q))
    assert np.all(np.diff(perm[2:]) > 0)


_space_st = st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 3), st.booleans())


@settings(max_examples=40, deadline=None)
@given(_space_st, st.integers(0, 10**6), st.integers(1, 4))
def test_load_count_and_idempotence(shape, seed, k):
    M, N, L, vias = shape
    sp = DesignSpace(M, N, L, vias and L > 1)
    topo = enumerate_ports(sp)
    g = topo.indices_of(PortClass.GROUND)
    io = [int(x) for x in g[:k]]
    pat = random_pattern(sp, 0.5, seed)
    a = map_to_loads(pat, topo, io)
    assert len(a) == topo.Q - len(io)
    assert a == map_to_loads(pat, topo, io)


@settings(max_examples=40, deadline=None)
@given(_space_st, st.integers(0, 10**6), st.data())
def test_locality_of_single_pixel_toggle(shape, seed, data):
    M, N, L, _ = shape
    sp = DesignSpace(M, N, L)
    topo = enumerate_ports(sp)
    io = [int(topo.indices_of(PortClass.GROUND)[0])]
    pat = random_pattern(sp, 0.5, seed)
    i = data.draw(st.integers(0, M - 1))
    j = data.draw(st.integers(0, N - 1))
    l = data.draw(st.integers(1, L))
    d2 = pat.data.copy()
    d2[i, j, l - 1] ^= 1
    a = map_to_loads(pat, topo, io).as_dict()
    b = map_to_loads(PixelPattern(sp, d2), topo, io).as_dict()
    changed = {p for p in a if a[p] != b[p]}
    assert changed <= topo.adjacency[(i, j, l)]


@settings(max_examples=40, deadline=None)
@given(_space_st, st.integers(0, 10**6), st.integers(0, 10**6))
def test_monotone_shorts(shape, s1, s2):
    M, N, L, _ = shape
    sp = DesignSpace(M, N, L)
    topo = enumerate_ports(sp)
    io = [int(topo.indices_of(PortClass.GROUND)[0])]
    p = random_pattern(sp, 0.5, s1)
    q = PixelPattern(sp, p.data | random_pattern(sp, 0.5, s2).data)
    sp_ = {int(x) for x in map_to_loads(p, topo, io).vp_index[map_to_loads(p, topo, io).state == SHORT]}
    lq = map_to_loads(q, topo, io)
    sq = {int(x) for x in lq.vp_index[lq.state == SHORT]}
    assert sp_ <= sq


def test_io_selection_k():
    assert IoSelection((3, 1)).K == 2
    assert FINITE not in (SHORT, OPEN)
