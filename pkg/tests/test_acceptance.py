"""Acceptance criteria 1-9, each reported as a PASS/FAIL line in the terminal summary.

Run ``pytest tests/test_acceptance.py -v`` (add ``-s`` to also see the lines
as each test finishes).
"""
import os
import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from conftest import ACCEPTANCE, full_system_solve, ground_io, random_symmetric_z, rel_fro
from mapes.errors import CorruptCache, PortCountMismatch
from mapes.metrics import e_mean
from mapes.pattern import FINITE, OPEN, IoSelection, LoadAssignment, map_to_loads, random_pattern
from mapes.prior_io import (
    PriorData,
    cache_read,
    cache_write,
    partition,
    read_touchstone,
    read_touchstone_data,
    write_touchstone,
)
from mapes.solver import NetworkResponse, evaluate, evaluate_batch, reduce, s_to_z, z_to_s
from mapes.synth import SynthParams, extract_prior, generate, oracle_solve
from mapes.topology import DesignSpace, count_ports, enumerate_ports


def record(crit, ok, detail, part=""):
    ACCEPTANCE.setdefault(crit, []).append((part, bool(ok), detail))
    print(f"criterion {crit}{' ' + part if part else ''}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


class _Bare:
    """Port list for priors that are not built on a pixel grid."""

    def __init__(self, Q):
        self.Q = Q
        self.digest = f"bare-{Q}"


# -- 1 ---------------------------------------------------------------------------

def test_criterion_1_port_counts():
    t0 = time.perf_counter()
    reported = {
        (16, 16, 1, False): 1444,
        (17, 17, 1, False): 1636,
        (16, 16, 2, True): 3144,
        (13, 13, 2, True): 2049,  # 65 nm chip: the closed form, not the 2013 quoted beside it
    }
    bad = [k for k, q in reported.items() if count_ports(DesignSpace(*k)) != q]
    n = 0
    for M in range(1, 21):
        for N in range(1, 21):
            for L in range(1, 4):
                for vias in ((False, True) if L > 1 else (False,)):
                    sp = DesignSpace(M, N, L, vias)
                    n += 1
                    if enumerate_ports(sp).Q != count_ports(sp):
                        bad.append((M, N, L, vias))
    dt = time.perf_counter() - t0
    record(1, not bad and dt < 1.0, f"{len(reported)} reported counts + {n} enumerations, {len(bad)} mismatches, {dt:.2f} s")


# -- 2 and 6 share the oracle suite ----------------------------------------------------

SWEEP16 = np.linspace(1e9, 100e9, 16)


@pytest.fixture(scope="module")
def oracle_suite():
    t0 = time.perf_counter()
    runs = []
    for space, count, via_zs in ((DesignSpace(8, 8, 1), 100, (0,)),
                                 (DesignSpace(6, 6, 3, True), 100, (0, 2.0 + 0.5j))):
        topo = enumerate_ports(space)
        net = generate(topo, SynthParams(parasitics=True), seed=space.layers)
        prior = extract_prior(net, SWEEP16)
        io = ground_io(topo, 4)
        for n in range(count):
            pat = random_pattern(space, 0.5, 1000 * space.layers + n)
            vz = via_zs[n % len(via_zs)]
            runs.append((evaluate(prior, pat, io, via_z=vz), oracle_solve(net, pat, io, vz, SWEEP16)))
    return runs, time.perf_counter() - t0


def test_criterion_2_oracle_equivalence(oracle_suite):
    runs, dt = oracle_suite
    worst = max(float(np.max(rel_fro(a.data, b.data))) for a, b in runs)
    em = e_mean([z_to_s(b) for _, b in runs], [z_to_s(a) for a, _ in runs]).e_mean
    record(2, worst <= 1e-8 and em <= 1e-8 and dt < 60,
           f"{len(runs)} patterns, worst rel. Frobenius {worst:.1e}, e_mean {em:.1e}, {dt:.1f} s")


def test_criterion_6_symmetry(oracle_suite):
    runs, _ = oracle_suite
    worst = 0.0
    for a, b in runs:
        for r in (a.data, b.data):
            worst = max(worst, float(np.max(rel_fro(r, r.transpose(0, 2, 1)))))
    record(6, worst <= 1e-10, f"{2 * len(runs)} responses (analytic + oracle), worst asymmetry {worst:.1e}")


# -- 3, 4, 5 -------------------------------------------------------------------------

def test_criterion_3_block_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        Q = int(rng.integers(10, 201))
        K = int(rng.integers(1, 9))
        Z = random_symmetric_z(rng, Q)
        io = rng.choice(Q, K, replace=False).tolist()
        vp = [p for p in range(Q) if p not in io]
        state = rng.integers(0, 3, Q - K)
        zl = np.where(state == FINITE, rng.uniform(0.1, 10, Q - K) + 1j * rng.uniform(-5, 5, Q - K), 0)
        loads = LoadAssignment.from_states(IoSelection(tuple(io)), Q, state, zl)
        out = reduce(partition(PriorData(_Bare(Q), [1e9], Z[None]), io), loads).data[0]
        ref = full_system_solve(Z, io, vp, state, zl)
        worst = max(worst, float(np.linalg.norm(out - ref) / np.linalg.norm(ref)))
    dt = time.perf_counter() - t0
    record(3, worst <= 1e-10 and dt < 10, f"50 cases Q<=200, worst rel. error {worst:.1e}, {dt:.1f} s")


def test_criterion_4_open_elimination():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        Q = int(rng.integers(10, 201))
        K = int(rng.integers(1, 9))
        Z = random_symmetric_z(rng, Q)
        io = rng.choice(Q, K, replace=False).tolist()
        state = rng.integers(0, 3, Q - K)
        zl = np.where(state == FINITE, rng.uniform(0.1, 10, Q - K) + 0j, 0)
        prior = PriorData(_Bare(Q), [1e9], Z[None])
        sel = IoSelection(tuple(io))
        out = reduce(partition(prior, io), LoadAssignment.from_states(sel, Q, state, zl)).data[0]
        big = np.where(state == OPEN, FINITE, state)
        zbig = np.where(state == OPEN, 1e12 + 0j, zl)
        lit = reduce(partition(prior, io), LoadAssignment.from_states(sel, Q, big, zbig)).data[0]
        worst = max(worst, float(np.linalg.norm(lit - out) / np.linalg.norm(out)))
    dt = time.perf_counter() - t0
    record(4, worst <= 1e-4 and dt < 10, f"20 cases, worst rel. deviation {worst:.1e}, {dt:.2f} s")


def _resp(data, rep):
    data = np.asarray(data, dtype=complex)
    return NetworkResponse(IoSelection(tuple(range(data.shape[-1]))), np.arange(1, data.shape[0] + 1) * 1e9,
                           data, rep)


def test_criterion_5_z_s_round_trip():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        K = int(rng.integers(1, 9))
        Z = np.stack([50 * random_symmetric_z(rng, K) for _ in range(3)])
        back = s_to_z(z_to_s(_resp(Z, "Z"))).data
        worst = max(worst, float(np.max(np.abs(back - Z)) / np.max(np.abs(Z))))
    eps = np.finfo(float).eps
    anchors = tuple(bool(a) for a in (
        np.array_equal(z_to_s(_resp([50 * np.eye(4)], "Z")).data, np.zeros((1, 4, 4))),
        z_to_s(_resp([[[0]]], "Z")).data[0, 0, 0] == -1,
        abs(z_to_s(_resp([[[100]]], "Z"), 50).data[0, 0, 0] - 1 / 3) <= eps,
    ))
    record(5, worst <= 1e-12 and all(anchors),
           f"100 round trips, worst {worst:.1e}; anchors S(50I)=0, s(0)=-1, s(100)=1/3: {anchors}")


# -- 7 and 8 share the 16x16x1, 41-point prior --------------------------------------------

SWEEP41 = np.linspace(1e9, 100e9, 41)


@pytest.fixture(scope="module")
def big_prior():
    topo = enumerate_ports(DesignSpace(16, 16, 1))
    with threadpool_limits(1):
        return extract_prior(generate(topo, seed=16), SWEEP41)


def test_criterion_7_cost_independent_of_k(big_prior):
    t0 = time.perf_counter()
    pat = random_pattern(big_prior.topo.space, 0.5, 7)
    times, dims = {}, {}
    with threadpool_limits(1):
        for K in (2, 4, 8):
            io = IoSelection(tuple(ground_io(big_prior.topo, K)))
            part = partition(big_prior, io)
            loads = map_to_loads(pat, big_prior.topo, io)
            best = np.inf
            for _ in range(5):
                t = time.perf_counter()
                out = reduce(part, loads)
                best = min(best, time.perf_counter() - t)
            times[K], dims[K] = best, out.system_dim
    ratio = max(times.values()) / min(times.values())
    dt = time.perf_counter() - t0
    record(7, ratio <= 1.5 and len(set(dims.values())) == 1 and dt < 30,
           "reduce " + ", ".join(f"K={k}: {t * 1e3:.0f} ms" for k, t in times.items())
           + f", ratio {ratio:.2f}, system dim {sorted(set(dims.values()))}, {dt:.1f} s")


def test_criterion_8_latency(big_prior):
    sp = big_prior.topo.space
    io = ground_io(big_prior.topo, 2)
    pats = [random_pattern(sp, 0.5, s) for s in range(3)]
    with threadpool_limits(1):
        t = time.perf_counter()
        for p in pats:
            evaluate(big_prior, p, io)
        per = (time.perf_counter() - t) / len(pats)
    record(8, per <= 2.0, f"{per:.2f} s per pattern at 41 frequencies, limit 2 s", part="latency")


def test_criterion_8_scaling(big_prior):
    sp = big_prior.topo.space
    io = ground_io(big_prior.topo, 2)
    pats = [random_pattern(sp, 0.5, s) for s in range(8)]
    evaluate_batch(big_prior, pats[:1], io, jobs=1)
    elapsed = {}
    for jobs in (1, 4):
        t = time.perf_counter()
        evaluate_batch(big_prior, pats, io, jobs=jobs)
        elapsed[jobs] = time.perf_counter() - t
    speedup = elapsed[1] / elapsed[4]
    cpus = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    record(8, speedup >= 3.0,
           f"1 -> 4 workers throughput x{speedup:.2f}, need x3; {cpus} CPU(s) available", part="scaling")


# -- 9 -------------------------------------------------------------------------------

def test_criterion_9_format_fidelity(tmp_path):
    topo = enumerate_ports(DesignSpace(3, 3, 1))
    prior = extract_prior(generate(topo, SynthParams(parasitics=True), seed=9), SWEEP16)
    checks = {}

    ts = write_touchstone(prior, tmp_path / "prior.s40p")
    back = read_touchstone(ts, topo)
    checks["touchstone Z"] = float(np.max(np.abs(back.Z - prior.Z) / np.abs(prior.Z).max()))
    io = ground_io(topo, 2)
    r = z_to_s(evaluate(prior, random_pattern(topo.space, 0.5, 1), io))
    ts2 = write_touchstone(r, tmp_path / "r.s2p", "S")
    _, _, _, s = read_touchstone_data(ts2)
    checks["touchstone S"] = float(np.max(np.abs(s - r.data)))
    cache = cache_write(prior, tmp_path / "prior.mapz")
    checks["cache"] = float(np.max(np.abs(cache_read(cache, topo).Z - prior.Z)))
    lossless = all(v <= 1e-12 for v in checks.values())

    raw = bytearray(cache.read_bytes())
    raw[len(raw) // 2] ^= 0x01
    corrupt = tmp_path / "bad.mapz"
    corrupt.write_bytes(bytes(raw))
    codes = {}
    for name, fn, exc in (
        ("corrupt cache", lambda: cache_read(corrupt, topo), CorruptCache),
        ("cache port count", lambda: cache_read(cache, enumerate_ports(DesignSpace(4, 4))), PortCountMismatch),
        ("touchstone port count", lambda: read_touchstone(ts, enumerate_ports(DesignSpace(4, 4))), PortCountMismatch),
    ):
        try:
            fn()
            codes[name] = None
        except exc as e:
            codes[name] = e.exit_code
    expected = {"corrupt cache": 4, "cache port count": 2, "touchstone port count": 2}
    record(9, lossless and codes == expected,
           ", ".join(f"{k} {v:.1e}" for k, v in checks.items()) + f"; exit codes {codes}")
