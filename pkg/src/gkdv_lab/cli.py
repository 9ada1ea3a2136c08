"""
``gkdv-lab`` command-line interface.

Subcommands::

    simulate     run a spec file (with optional sweep)
    norms        functionals and space-time norms of a snapshot
    soliton      write a soliton snapshot
    decompose    greedy profile decomposition of a snapshot
    concentrate  windowed critical-mass trace over a snapshot directory

Exit codes: 0 success (a fired blow-up verdict is a success), 1 invalid
input, 2 inconclusive run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .concentration import WindowLaw, concentration_sensitivity, concentration_series
from .errors import ContractError, LabError
from .experiment import EXIT_INCONCLUSIVE, EXIT_INVALID, EXIT_OK, load_spec, run_sweep
from .functionals import (
    StrichartzAccumulator,
    as_fraction,
    canonical_pairs,
    energy,
    fmt,
    is_admissible,
    mass,
    sobolev_norm,
)
from .ground_state import ode_residual, soliton
from .profiles import extract_profiles
from .spectral import Grid1D, airy_symbol, critical_exponent, read_snapshot, write_snapshot

log = logging.getLogger("gkdv_lab")


def _emit_json(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _error(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_INVALID


# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        spec = load_spec(args.spec)
        outdir = Path(args.out) if args.out else None
        results = run_sweep(spec, jobs=args.jobs, outdir=outdir)
    except LabError as exc:
        return _error(str(exc))
    code = EXIT_OK
    for r in results:
        if "error" in r:
            print(f"{r['name']}: error: {r['error']}", file=sys.stderr)
            code = EXIT_INVALID
            continue
        v = r["verdict"]
        print(f"{r['name']}: reason={v['reason']} fired={str(v['fired']).lower()} "
              f"t_last={fmt(v['t_last'])} -> {r['outdir']}")
        if r["exit_code"] == EXIT_INCONCLUSIVE and code == EXIT_OK:
            code = EXIT_INCONCLUSIVE
    return code


def _parse_pair(text: str, k: int):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 2:
        parts.append("0")
    if len(parts) != 3:
        raise ContractError(f"pair {text!r} must be p,q[,s]")
    try:
        return tuple(as_fraction(p) for p in parts)
    except (ValueError, ZeroDivisionError):
        raise ContractError(f"pair {text!r} is not numeric") from None


def _trajectory_norms(snaps, pairs, k):
    grid = snaps[0][1].grid
    acc = StrichartzAccumulator(k, grid, tracked_pairs=pairs)
    for t, f in snaps:
        acc.add(t, f)
    return acc


def _load_dir(path: Path):
    snaps = []
    for meta_path in sorted(path.glob("*.json")):
        if not meta_path.with_suffix(".bin").exists():
            continue
        f, meta = read_snapshot(meta_path)
        snaps.append((float(meta["time"]), f, meta))
    if not snaps:
        raise ContractError(f"no snapshots in {path}")
    snaps.sort(key=lambda s: s[0])
    return snaps


def cmd_norms(args) -> int:
    path = Path(args.snapshot)
    try:
        if path.is_dir():
            snaps = _load_dir(path)
            f, meta = snaps[-1][1], snaps[-1][2]
        else:
            f, meta = read_snapshot(path)
            snaps = None
    except (OSError, ValueError, KeyError, LabError) as exc:
        return _error(f"cannot read snapshot {path}: {exc}")
    k = args.k if args.k is not None else int(meta.get("k", 0))
    if k < 4:
        return _error("k must be >= 4 (pass --k or use a snapshot with k in its sidecar)")

    try:
        pairs, fixed = [], set(canonical_pairs(k))
        for text in args.pair or []:
            if text == "canonical":
                pairs.extend(canonical_pairs(k))
            else:
                pairs.append(_parse_pair(text, k))
    except ContractError as exc:
        return _error(str(exc))
    notes = []
    for p, q, s in pairs:
        lhs = 2 / p + 1 / q
        if not is_admissible(p, q, k) and (p, q, s) in fixed:
            notes.append(f"pair ({p}, {q}) with D^{s} is one of the canonical norms; it is "
                         "not in the family 2/p + 1/q = 2/k and is computed as requested")
        elif not is_admissible(p, q, k):
            msg = (f"pair (p, q) = ({p}, {q}) violates the admissibility identity "
                   f"2/p + 1/q = 2/k: 2/p + 1/q = {lhs} but 2/k = {Fraction(2, k)}")
            if not args.force:
                return _error(msg + " (use --force to compute it anyway)")
            notes.append("forced: " + msg)
        elif args.force and p == q:
            notes.append(f"pair ({p}, {q}) is admissible: diagonal case p = q of the "
                         "space-time estimate")

    sk = critical_exponent(k)
    out = {
        "k": k,
        "time": float(meta.get("time", 0.0)),
        "mass": mass(f),
        "energy": energy(f, k),
        "hsk_norm": sobolev_norm(f, sk),
        "sobolev": {str(s): sobolev_norm(f, s) for s in (args.sobolev or [])},
    }
    if pairs:
        if snaps is not None:
            acc = _trajectory_norms([(t, g) for t, g, _ in snaps], pairs, k)
            out["pairs_source"] = "trajectory"
        else:
            acc = StrichartzAccumulator(k, f.grid, tracked_pairs=pairs)
            c = np.fft.rfft(f.values)
            for t in np.linspace(0.0, args.horizon, args.samples + 1):
                acc.add_spectrum(float(t), c * airy_symbol(f.grid, float(t)) if t else c)
            out["pairs_source"] = f"linear flow on [0, {fmt(args.horizon)}]"
        out["pairs"] = [
            {"pair": [str(p), str(q), str(s)], "admissible": is_admissible(p, q, k),
             "value": acc.norm(p, q, s)}
            for p, q, s in pairs
        ]
    if notes:
        out["notes"] = notes
        for n in notes:
            print(n, file=sys.stderr)
    _emit_json(out, args.out)
    return EXIT_OK


def cmd_soliton(args) -> int:
    try:
        grid = Grid1D(args.n_points, args.length)
        f = soliton(args.k, args.c, grid, args.x0)
    except LabError as exc:
        return _error(str(exc))
    write_snapshot(args.out, f, 0.0, args.k)
    _emit_json({
        "k": args.k,
        "c": args.c,
        "ode_residual": ode_residual(f, args.k, args.c),
        "mass": mass(f),
        "energy": energy(f, args.k),
        "snapshot": str(Path(args.out).with_suffix(".bin")),
    }, None)
    return EXIT_OK


def cmd_decompose(args) -> int:
    try:
        f, meta = read_snapshot(args.snapshot)
    except (OSError, ValueError, KeyError, LabError) as exc:
        return _error(f"cannot read snapshot {args.snapshot}: {exc}")
    k = args.k if args.k is not None else int(meta.get("k", 0))
    try:
        rep = extract_profiles(f, k, max_profiles=args.max_profiles,
                               strichartz_stop=args.strichartz_stop, horizon=args.horizon)
    except LabError as exc:
        return _error(str(exc))
    _emit_json(rep.to_dict(), args.out)
    return EXIT_OK


def _t_star_from_verdict(snapdir: Path) -> float | None:
    for cand in (snapdir / "verdict.json", snapdir.parent / "verdict.json"):
        if cand.exists():
            return float(json.loads(cand.read_text())["t_last"])
    return None


def _write_series(path, series) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "lambda", "x0", "window_mass", "fraction", "resolution_flag"])
        for e in series:
            w.writerow([fmt(e.t), fmt(e.lam), fmt(e.x0), fmt(e.window_mass), fmt(e.fraction),
                        int(e.resolution_flag)])


def cmd_concentrate(args) -> int:
    snapdir = Path(args.snapshots)
    try:
        snaps = _load_dir(snapdir)
        law = WindowLaw.parse(args.law)
    except (OSError, ValueError, KeyError, LabError) as exc:
        return _error(str(exc))
    k = args.k if args.k is not None else int(snaps[0][2].get("k", 0))
    t_star = args.t_star if args.t_star is not None else _t_star_from_verdict(snapdir)
    if t_star is None:
        return _error("no --t-star given and no verdict.json next to the snapshots")
    # only snapshots strictly before T* enter the trace
    pairs = [(t, f) for t, f, _ in snaps if t < t_star]
    try:
        series = concentration_series(pairs, law, t_star, k)
    except LabError as exc:
        return _error(str(exc))
    if args.out:
        _write_series(args.out, series)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["t", "lambda", "x0", "window_mass", "fraction", "resolution_flag"])
        for e in series:
            w.writerow([fmt(e.t), fmt(e.lam), fmt(e.x0), fmt(e.window_mass), fmt(e.fraction),
                        int(e.resolution_flag)])
    if args.sensitivity:
        if not args.out:
            return _error("--sensitivity needs --out")
        sens = concentration_sensitivity(pairs, law, t_star, k)
        stem = Path(args.out)
        for fac, ser in sens.items():
            if fac != 1.0:
                _write_series(stem.with_name(f"{stem.stem}_tstar{fac:g}{stem.suffix}"), ser)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gkdv-lab",
        description="Numerical laboratory for the focusing generalized KdV equation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run an experiment spec (JSON or TOML)")
    p.add_argument("spec")
    p.add_argument("--out", help="output directory (default: spec outputs.directory/name)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel sweep workers (capped by GKDV_LAB_THREADS)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("norms", help="functionals of a snapshot or snapshot directory")
    p.add_argument("snapshot")
    p.add_argument("--k", type=int)
    p.add_argument("--pair", action="append",
                   help="space-time pair p,q[,s] (fractions allowed) or 'canonical'; repeatable")
    p.add_argument("--sobolev", type=float, action="append", help="extra Sobolev exponent")
    p.add_argument("--force", action="store_true", help="accept non-admissible pairs")
    p.add_argument("--horizon", type=float, default=1.0,
                   help="time horizon of the linear flow for single snapshots")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--out")
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("soliton", help="write a soliton snapshot")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--n-points", type=int, default=2048)
    p.add_argument("--length", type=float, default=100.0)
    p.add_argument("--out", required=True, help="snapshot stem")
    p.set_defaults(func=cmd_soliton)

    p = sub.add_parser("decompose", help="profile decomposition of a snapshot")
    p.add_argument("snapshot")
    p.add_argument("--k", type=int)
    p.add_argument("--max-profiles", type=int, default=4)
    p.add_argument("--strichartz-stop", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("concentrate", help="windowed critical mass over a snapshot directory")
    p.add_argument("snapshots")
    p.add_argument("--law", default="power:c=1,exponent=0.2")
    p.add_argument("--t-star", type=float, help="default: t_last from the run's verdict.json")
    p.add_argument("--k", type=int)
    p.add_argument("--sensitivity", action="store_true", help="also write T* x 0.9 and x 1.1")
    p.add_argument("--out")
    p.set_defaults(func=cmd_concentrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
