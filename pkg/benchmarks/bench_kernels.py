#!/usr/bin/env python3
"""Compare the numba and pure-numpy kernel backends.

Times the reduction sweep on a synthetic prior and the branch-stamping
kernel used by the oracle, and checks both backends agree.

    python benchmarks/bench_kernels.py --rows 16 --cols 16 --freqs 41
"""
import argparse
import json
import time

import numpy as np
from threadpoolctl import threadpool_limits

from mapes import kernels
from mapes.pattern import IoSelection, OPEN, map_to_loads, random_pattern
from mapes.prior_io import partition
from mapes.synth import _background_branches, extract_prior, generate
from mapes.topology import DesignSpace, PortClass, enumerate_ports


def best_of(fn, repeats):
    fn()  # warm-up, includes JIT compilation on first use
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=16)
    ap.add_argument("--cols", type=int, default=16)
    ap.add_argument("--layers", type=int, default=1)
    ap.add_argument("--freqs", type=int, default=41)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print results as JSON")
    args = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        ap.error("numba kernels are disabled (MAPES_KERNELS=numpy or numba missing)")

    space = DesignSpace(args.rows, args.cols, args.layers)
    topo = enumerate_ports(space)
    net = generate(topo, seed=0)
    freqs = np.linspace(1e9, 100e9, args.freqs)
    prior = extract_prior(net, freqs)
    ground = np.flatnonzero(topo.port_class == PortClass.GROUND)
    io = IoSelection(tuple(int(p) for p in ground[:: max(1, ground.size // 4)][:4]))
    loads = map_to_loads(random_pattern(space, 0.5, 1), topo, io)
    part = partition(prior, io)
    keep = loads.state != OPEN
    kept = np.ascontiguousarray(loads.vp_index[keep])
    zl = np.ascontiguousarray(loads.z[keep])
    io_idx = np.asarray(io.ports, dtype=np.int64)
    Z = prior.Z

    omega = 2 * np.pi * freqs
    a, b, y = _background_branches(net, omega)

    rows = []
    with threadpool_limits(1):
        for name, np_fn, nb_fn in (
            ("schur_sweep", lambda: kernels.schur_sweep_numpy(Z, io_idx, kept, zl),
             lambda: kernels.schur_sweep_numba(Z, io_idx, kept, zl)),
            ("stamp_branches", lambda: kernels.stamp_branches_numpy(net.n_nodes, a, b, y),
             lambda: kernels.stamp_branches_numba(net.n_nodes, a, b, y)),
        ):
            t_np, r_np = best_of(np_fn, args.repeats)
            t_nb, r_nb = best_of(nb_fn, args.repeats)
            dev = float(np.max(np.abs(r_np - r_nb)) / max(np.max(np.abs(r_np)), 1e-300))
            rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb,
                         "max_rel_dev": dev})
    meta = {"Q": topo.Q, "system_dim": int(kept.size), "freqs": args.freqs}
    if args.json:
        print(json.dumps({"setup": meta, "results": rows}, indent=2))
        return
    print(f"Q={meta['Q']}  kept ports={meta['system_dim']}  frequencies={meta['freqs']}  (single BLAS thread)")
    print(f"{'kernel':<16}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max rel dev':>14}")
    for r in rows:
        print(f"{r['kernel']:<16}{r['numpy_s']:>12.4f}{r['numba_s']:>12.4f}{r['speedup']:>10.2f}{r['max_rel_dev']:>14.1e}")


if __name__ == "__main__":
    main()
