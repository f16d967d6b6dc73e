"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O failure.

Any flag may also come from ``--config FILE``, a flat ``key = value`` file
whose keys are the long flag names (``rows``, ``ref-ohms``, ...). Keys for
other subcommands are ignored, unknown keys are errors. Command line flags
override the file, which overrides built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import write_dataset
from .errors import MalformedInput, MapesError, PortCountMismatch, ShapeMismatch
from .metrics import compare_report, e_mean
from .pattern import IoSelection, as_io, iter_pattern_batch
from .prior_io import cache_header, cache_read, cache_write, read_touchstone, touchstone_name, write_touchstone
from .solver import DEFAULT_REF_OHMS, NetworkResponse, default_jobs, evaluate_batch, z_to_s
from .synth import SynthParams, extract_prior, generate, load_network, oracle_solve
from .topology import DesignSpace, class_counts, count_ports, enumerate_ports, export_port_map, io_from_descriptors

log = logging.getLogger("mapes")


# -- flag parsing helpers ----------------------------------------------------

def parse_freq(spec: str) -> np.ndarray:
    """``start:stop:points`` (linear, Hz) or a single frequency."""
    try:
        parts = [float(p) for p in spec.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad frequency spec {spec!r}") from None
    if len(parts) == 1:
        return np.array(parts)
    if len(parts) != 3 or parts[2] < 1 or parts[2] != int(parts[2]):
        raise argparse.ArgumentTypeError("frequency spec must be start:stop:points")
    return np.linspace(parts[0], parts[1], int(parts[2]))


def parse_complex(spec: str) -> complex:
    """``re,im`` or a plain real number."""
    try:
        parts = [float(p) for p in str(spec).split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad complex value {spec!r}") from None
    if len(parts) == 1:
        return complex(parts[0], 0.0)
    if len(parts) == 2:
        return complex(parts[0], parts[1])
    raise argparse.ArgumentTypeError(f"bad complex value {spec!r}")


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise MalformedInput(f"not a boolean: {v!r}")


def read_config(path) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedInput(f"{path}:{n + 1}: expected key = value")
        k, v = (t.strip() for t in line.split("=", 1))
        out[k.lstrip("-").replace("-", "_")] = v
    return out


# -- shared argument groups ------------------------------------------------------

def _space_args(p, required=True):
    p.add_argument("--rows", type=int, required=False, default=None)
    p.add_argument("--cols", type=int, required=False, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--vias", action="store_true", default=None)


def _eval_args(p):
    p.add_argument("--io", required=False, default=None,
                   help="comma list of port indices or i:j:SIDE[@layer] ground-port descriptors")
    p.add_argument("--via-z", type=parse_complex, default=complex(0))
    p.add_argument("--ref-ohms", type=float, default=DEFAULT_REF_OHMS)
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default $MAPES_JOBS or 1)")
    p.add_argument("--coerce-vias", action="store_true", default=False)
    p.add_argument("--allow-any-io", action="store_true", default=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapes", description="Analytical multiport pixel EM simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology", help="count and export virtual ports")
    _space_args(p)
    p.add_argument("--out", default=None, help="port-map CSV path")
    p.set_defaults(func=cmd_topology)

    p = sub.add_parser("gen-prior", help="build a synthetic network and its prior impedance matrix")
    _space_args(p)
    p.add_argument("--freq", type=parse_freq, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parasitics", action="store_true", default=False)
    p.add_argument("--touchstone", action="store_true", default=False, help="also write the prior as .sNp")
    p.add_argument("--out", required=False, default=None, help="output directory")
    p.set_defaults(func=cmd_gen_prior)

    p = sub.add_parser("eval", help="evaluate pattern(s) against a prior")
    _space_args(p)
    _eval_args(p)
    p.add_argument("--prior", default=None, help="prior cache (.mapz) or Touchstone file")
    p.add_argument("--patterns", default=None, help="pattern JSON or JSON-lines batch")
    p.add_argument("--format", choices=("z", "s"), default="s")
    p.add_argument("--output-format", choices=("json", "touchstone"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="error report: analytic evaluation vs the nodal oracle, or two response files")
    _space_args(p)
    _eval_args(p)
    p.add_argument("--network", default=None)
    p.add_argument("--prior", default=None)
    p.add_argument("--patterns", default=None)
    p.add_argument("--freq", type=parse_freq, default=None)
    p.add_argument("--ref", default=None, help="reference responses (JSON lines)")
    p.add_argument("--test", default=None, help="test responses (JSON lines)")
    p.add_argument("--report-format", choices=("json", "table"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dataset", help="generate a sharded (pattern, S) dataset")
    _space_args(p)
    _eval_args(p)
    p.add_argument("--prior", default=None)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shard-size", type=int, default=1000)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dataset)

    for sp in sub.choices.values():
        sp.add_argument("--config", default=None, help="flat key = value file of flag defaults")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv):
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = read_config(args.config)
    choices = parser._subparsers._group_actions[0].choices  # noqa: SLF001
    subparser = choices[args.command]
    actions = {a.dest: a for a in subparser._actions}  # noqa: SLF001
    known = {a.dest for sp in choices.values() for a in sp._actions}  # noqa: SLF001
    defaults = {}
    for k, v in cfg.items():
        if k in ("config", "help", "func") or k not in known:
            raise MalformedInput(f"unknown config key {k!r}")
        if k not in actions:
            continue  # meant for another command; one file can serve a whole run
        act = actions[k]
        if act.nargs == 0:
            defaults[k] = _bool(v)
        elif act.type is not None:
            try:
                defaults[k] = act.type(v)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise MalformedInput(f"config {k}: {exc}") from None
        else:
            defaults[k] = v
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise MalformedInput("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _space(args, freqs=None, q_hint=None, pattern_hint=None) -> DesignSpace:
    rows, cols, layers = args.rows, args.cols, args.layers
    if pattern_hint is not None:
        rows = rows if rows is not None else pattern_hint.get("rows")
        cols = cols if cols is not None else pattern_hint.get("cols")
        layers = layers if layers is not None else pattern_hint.get("layers")
    if rows is None or cols is None:
        raise MalformedInput("design space unknown: pass --rows/--cols (and --layers/--vias)")
    layers = layers or 1
    vias = args.vias
    if vias is None:
        vias = False
        if q_hint is not None and layers > 1:
            vias = count_ports(DesignSpace(rows, cols, layers, True)) == q_hint
    kw = {} if freqs is None else {"freq_grid": tuple(freqs)}
    return DesignSpace(rows, cols, layers, bool(vias), **kw)


def _first_pattern_dict(path):
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        return None
    try:
        d = json.loads(text)
    except json.JSONDecodeError:
        d = json.loads(text.splitlines()[0])
    return d if isinstance(d, dict) else None


def _load_prior(path, args, pattern_hint=None):
    path = Path(path)
    if path.suffix.lower() == ".mapz":
        q = cache_header(path)["Q"]
        topo = enumerate_ports(_space(args, q_hint=q, pattern_hint=pattern_hint))
        if topo.Q != q:
            raise PortCountMismatch(f"cache has Q={q}, design space gives Q={topo.Q}")
        return cache_read(path, topo)
    topo = enumerate_ports(_space(args, pattern_hint=pattern_hint))
    return read_touchstone(path, topo)


def _io(args, topo) -> IoSelection:
    if args.io is None:
        raise MalformedInput("missing required option --io")
    return as_io(io_from_descriptors(topo, str(args.io).split(",")), topo, args.allow_any_io)


def _emit(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


# -- commands ---------------------------------------------------------------

def cmd_topology(args) -> int:
    _require(args, "rows", "cols")
    space = _space(args)
    topo = enumerate_ports(space)
    if args.out:
        export_port_map(topo, args.out)
    print(topo.Q)
    log.info("port classes: %s", class_counts(topo))
    return 0


def cmd_gen_prior(args) -> int:
    _require(args, "rows", "cols", "freq", "out")
    space = _space(args, freqs=args.freq)
    topo = enumerate_ports(space)
    net = generate(topo, SynthParams(parasitics=args.parasitics), seed=args.seed)
    prior = extract_prior(net, args.freq)
    prior.validate_reciprocity()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net.save(out / "network.json")
    cache_write(prior, out / "prior.mapz")
    export_port_map(topo, out / "portmap.csv")
    if args.touchstone:
        write_touchstone(prior, out / touchstone_name("prior", topo.Q), "Z")
    print(topo.Q)
    return 0


def _responses_text(responses, ids, rep, ref_ohms) -> str:
    lines = []
    for pid, r in zip(ids, responses):
        rr = z_to_s(r, ref_ohms) if rep == "s" else r
        lines.append(rr.to_json(pid))
    return "".join(line + "\n" for line in lines)


def cmd_eval(args) -> int:
    _require(args, "prior", "patterns")
    hint = _first_pattern_dict(args.patterns)
    prior = _load_prior(args.prior, args, hint)
    io = _io(args, prior.topo)
    batch = list(iter_pattern_batch(args.patterns, prior.topo.space, coerce=args.coerce_vias))
    ids = [pid for pid, _ in batch]
    responses = evaluate_batch(prior, [p for _, p in batch], io, args.via_z, jobs=args.jobs,
                               allow_any_io=args.allow_any_io)
    if args.output_format == "touchstone":
        _require(args, "out")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for pid, r in zip(ids, responses):
            write_touchstone(r, out / touchstone_name(str(pid), io.K), args.format.upper(), args.ref_ohms)
    else:
        _emit(_responses_text(responses, ids, args.format, args.ref_ohms), args.out)
    return 0


def _read_responses(path) -> list[NetworkResponse]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(NetworkResponse.from_dict(json.loads(line)))
    return out


def cmd_compare(args) -> int:
    if args.ref or args.test:
        _require(args, "ref", "test")
        ref, test = _read_responses(args.ref), _read_responses(args.test)
        if len(ref) != len(test):
            raise ShapeMismatch(f"{len(ref)} reference responses vs {len(test)} test responses")
        ref = [z_to_s(r, args.ref_ohms) if r.representation == "Z" else r for r in ref]
        test = [z_to_s(r, args.ref_ohms) if r.representation == "Z" else r for r in test]
    else:
        _require(args, "network", "patterns")
        net = load_network(args.network)
        topo = net.topo
        if args.prior:
            prior = _load_prior(args.prior, argparse.Namespace(
                rows=topo.space.rows, cols=topo.space.cols, layers=topo.space.layers, vias=topo.space.has_vias))
        else:
            _require(args, "freq")
            prior = extract_prior(net, args.freq)
        io = _io(args, topo)
        patterns = [p for _, p in iter_pattern_batch(args.patterns, topo.space, coerce=args.coerce_vias)]
        analytic = evaluate_batch(prior, patterns, io, args.via_z, jobs=args.jobs, allow_any_io=args.allow_any_io)
        oracle = [oracle_solve(net, p, io, args.via_z, prior.freqs, allow_any_io=args.allow_any_io)
                  for p in patterns]
        ref = [z_to_s(r, args.ref_ohms) for r in oracle]
        test = [z_to_s(r, args.ref_ohms) for r in analytic]
    report = e_mean(ref, test)
    _emit(compare_report(report, None, args.report_format), args.out)
    return 0


def cmd_dataset(args) -> int:
    _require(args, "prior", "out")
    prior = _load_prior(args.prior, args)
    io = _io(args, prior.topo)
    jobs = default_jobs() if args.jobs is None else args.jobs
    manifest = write_dataset(args.out, prior, io, args.count, args.density, args.seed, via_z=args.via_z,
                             ref_ohms=args.ref_ohms, shard_size=args.shard_size, jobs=jobs,
                             allow_any_io=args.allow_any_io)
    print(manifest["count"])
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except MapesError as exc:
        print(f"mapes: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mapes: I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
