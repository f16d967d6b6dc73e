"""Sharded (pattern, S-response) datasets with a checksummed manifest."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import CorruptCache, MalformedInput
from .pattern import IoSelection, pattern_from_dict, random_pattern
from .prior_io import PriorData
from .solver import evaluate_batch, z_to_s

DATASET_FORMAT = "mapes-dataset/1"
MANIFEST = "manifest.json"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _record(n: int, pattern, resp) -> str:
    s = resp.data
    return json.dumps(
        {"id": n, "pattern": pattern.to_dict(), "s": np.stack([s.real, s.imag], axis=-1).tolist()},
        separators=(",", ":"),
    )


def write_dataset(out_dir, prior: PriorData, io: IoSelection, count: int, density: float, seed: int, *,
                  via_z: complex = 0, ref_ohms: float = 50.0, shard_size: int = 1000, jobs: int = 1,
                  allow_any_io: bool = False) -> dict:
    """Sample ``count`` random patterns, evaluate them, and write shards plus a manifest.

    Pattern ``n`` is drawn from the ``n``-th child of ``SeedSequence(seed)``
    so shards are reproducible regardless of ``jobs`` and ``shard_size``.
    """
    if count < 0 or shard_size < 1:
        raise MalformedInput("count must be >= 0 and shard_size >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    space = prior.topo.space
    children = np.random.SeedSequence(seed).spawn(count)
    shards = []
    for s0 in range(0, count, shard_size):
        idx = range(s0, min(count, s0 + shard_size))
        patterns = [random_pattern(space, density, children[n]) for n in idx]
        responses = evaluate_batch(prior, patterns, io, via_z, jobs=jobs, allow_any_io=allow_any_io)
        name = f"shard-{len(shards):05d}.jsonl"
        path = out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for n, pat, resp in zip(idx, patterns, responses):
                fh.write(_record(n, pat, z_to_s(resp, ref_ohms)))
                fh.write("\n")
        shards.append({"file": name, "records": len(patterns), "sha256": _sha256(path)})
    manifest = {
        "format": DATASET_FORMAT,
        "count": count,
        "seed": seed,
        "density": density,
        "design_space": {"rows": space.rows, "cols": space.cols, "layers": space.layers,
                         "has_vias": space.has_vias},
        "topology_digest": prior.topo.digest,
        "io": list(io.ports),
        "via_z": [complex(via_z).real, complex(via_z).imag],
        "ref_ohms": ref_ohms,
        "freqs": prior.freqs.tolist(),
        "shards": shards,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return manifest


def verify_dataset(out_dir) -> dict:
    """Re-hash every shard and check record counts; raises :class:`CorruptCache` on mismatch."""
    out = Path(out_dir)
    manifest = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
    total = 0
    for sh in manifest["shards"]:
        path = out / sh["file"]
        if _sha256(path) != sh["sha256"]:
            raise CorruptCache(f"{path}: checksum mismatch")
        with open(path, encoding="utf-8") as fh:
            n = sum(1 for line in fh if line.strip())
        if n != sh["records"]:
            raise CorruptCache(f"{path}: {n} records, manifest says {sh['records']}")
        total += n
    if total != manifest["count"]:
        raise CorruptCache(f"dataset holds {total} records, manifest says {manifest['count']}")
    return manifest


def iter_records(out_dir):
    """Yield ``(id, pattern_dict, S array (F, K, K))`` in id order."""
    out = Path(out_dir)
    manifest = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
    for sh in manifest["shards"]:
        with open(out / sh["file"], encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                s = np.asarray(d["s"], dtype=float)
                yield d["id"], d["pattern"], s[..., 0] + 1j * s[..., 1]


def load_record_pattern(d: dict, space):
    return pattern_from_dict(d, space)
