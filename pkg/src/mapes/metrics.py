"""Agreement metrics between two sets of S-parameter responses."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import RepresentationMismatch, ShapeMismatch
from .solver import NetworkResponse


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Absolute complex deviations ``|S_ref - S_test|`` per example, shape (F, K, K) each."""

    errors: tuple[np.ndarray, ...]
    freqs: tuple[np.ndarray, ...]
    mask: np.ndarray | None = None

    def _terms(self, k):
        e = self.errors[k]
        return e[:, self.mask] if self.mask is not None else e.reshape(e.shape[0], -1)

    @property
    def e_mean(self) -> float:
        total = sum(float(self._terms(k).sum()) for k in range(len(self.errors)))
        count = sum(self._terms(k).size for k in range(len(self.errors)))
        return total / count if count else 0.0

    @property
    def per_example(self) -> list[float]:
        return [float(self._terms(k).mean()) if self._terms(k).size else 0.0 for k in range(len(self.errors))]

    @property
    def max_error(self) -> float:
        return max((float(self._terms(k).max()) for k in range(len(self.errors)) if self._terms(k).size),
                   default=0.0)

    @property
    def argmax(self) -> dict | None:
        """First location (in example, freq, i, j order) holding the maximum error."""
        best, where = -1.0, None
        for n, e in enumerate(self.errors):
            masked = e if self.mask is None else np.where(self.mask[None], e, -np.inf)
            if not np.isfinite(masked).any():
                continue
            flat = int(np.argmax(masked))
            f, i, j = np.unravel_index(flat, e.shape)
            if masked[f, i, j] > best:
                best, where = float(masked[f, i, j]), (n, int(i), int(j), float(self.freqs[n][f]))
        if where is None:
            return None
        n, i, j, fhz = where
        return {"example": n, "i": i, "j": j, "freq_hz": fhz}

    def to_dict(self) -> dict:
        return {
            "e_mean": self.e_mean,
            "max_error": self.max_error,
            "argmax": self.argmax,
            "per_example": self.per_example,
        }


def e_mean(ref: Sequence[NetworkResponse], test: Sequence[NetworkResponse], mask=None) -> ErrorReport:
    """Mean magnitude of complex S-parameter differences over examples, port pairs and frequencies.

    ``mask`` is an optional (K, K) boolean selecting the port pairs that
    enter the average.
    """
    if len(ref) != len(test):
        raise ShapeMismatch(f"{len(ref)} reference responses vs {len(test)} test responses")
    errs, freqs = [], []
    for n, (r, t) in enumerate(zip(ref, test)):
        if r.representation != "S" or t.representation != "S":
            raise RepresentationMismatch(f"example {n}: both responses must be S-parameters")
        if r.data.shape != t.data.shape:
            raise ShapeMismatch(f"example {n}: shapes {r.data.shape} vs {t.data.shape}")
        if not np.array_equal(r.freqs, t.freqs):
            raise ShapeMismatch(f"example {n}: frequency grids differ")
        errs.append(np.abs(r.data - t.data))
        freqs.append(r.freqs)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if errs and mask.shape != errs[0].shape[1:]:
            raise ShapeMismatch(f"port-pair mask {mask.shape} does not match K x K")
    return ErrorReport(tuple(errs), tuple(freqs), mask)


def compare_report(ref, test, fmt: str = "json", mask=None) -> str:
    """Render an :class:`ErrorReport` as JSON or a plain-text table."""
    report = ref if isinstance(ref, ErrorReport) else e_mean(ref, test, mask)
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    lines = [f"{'example':>8}  {'mean |dS|':>12}"]
    lines += [f"{n:>8}  {v:>12.4e}" for n, v in enumerate(report.per_example)]
    lines.append(f"{'all':>8}  {report.e_mean:>12.4e}")
    am = report.argmax
    if am is not None:
        lines.append(
            f"max |dS| = {report.max_error:.4e} at example {am['example']}, "
            f"S{am['i'] + 1},{am['j'] + 1}, {am['freq_hz']:.6g} Hz"
        )
    return "\n".join(lines) + "\n"
