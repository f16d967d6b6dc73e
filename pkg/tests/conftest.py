import numpy as np
import pytest

from mapes.pattern import OPEN, SHORT
from mapes.synth import SynthParams, extract_prior, generate
from mapes.topology import DesignSpace, PortClass, enumerate_ports

SWEEP = np.linspace(1e9, 100e9, 16)


def rel_fro(a, b):
    """Per-frequency relative Frobenius distance of ``a`` from reference ``b``."""
    return np.linalg.norm(a - b, axis=(-2, -1)) / np.linalg.norm(b, axis=(-2, -1))


def ground_io(topo, k, layer=1):
    """``k`` ground ports spread evenly around one layer's boundary."""
    g = [p.index for p in topo.ports if p.cls == PortClass.GROUND and p.layer == layer]
    step = max(1, len(g) // k)
    return [g[n * step] for n in range(k)]


def random_symmetric_z(rng, Q, loss=1.0):
    """Random complex symmetric Z with a positive-definite real part."""
    A = rng.standard_normal((Q, Q))
    R = A @ A.T / Q + loss * np.eye(Q)
    X = rng.standard_normal((Q, Q))
    return R + 1j * (X + X.T) / 2


def full_system_solve(Z, io, vp, state, zl):
    """Reference: solve [V; I_vp] from V = Z I, V_vp = -Z_L I_vp (Open: I = 0) for unit I/O currents."""
    Q = Z.shape[0]
    K = len(io)
    nv = len(vp)
    # unknowns: V (Q), I_vp (nv); equations: Q network rows + nv load rows
    A = np.zeros((Q + nv, Q + nv), dtype=complex)
    A[:Q, :Q] = np.eye(Q)
    A[:Q, Q:] = -Z[:, vp]
    for r, (s, z) in enumerate(zip(state, zl)):
        if s == OPEN:
            A[Q + r, Q + r] = 1.0
        else:
            A[Q + r, vp[r]] = 1.0
            A[Q + r, Q + r] = 0.0 if s == SHORT else z
    rhs = np.zeros((Q + nv, K), dtype=complex)
    rhs[:Q] = Z[:, io]
    sol = np.linalg.solve(A, rhs)
    return sol[io, :]


@pytest.fixture(scope="session")
def space_3x3():
    return DesignSpace(3, 3, 1)


@pytest.fixture(scope="session")
def small_net():
    """3x3x2 with vias and parasitic coupling, plus its extracted prior."""
    topo = enumerate_ports(DesignSpace(3, 3, 2, has_vias=True))
    net = generate(topo, SynthParams(parasitics=True), seed=11)
    return net, extract_prior(net, SWEEP)


@pytest.fixture(scope="session")
def net_2x2():
    topo = enumerate_ports(DesignSpace(2, 2, 1))
    net = generate(topo, seed=5)
    return net, extract_prior(net, SWEEP)


# acceptance results: criterion -> list of (part, ok, detail)
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAILED'} ({d})" if name else d for name, good, d in parts)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")
