"""
Experiment specifications and the run/sweep harness.

A spec is a JSON or TOML document::

    name = "dichotomy"
    k = 5

    [grid]
    n_points = 1024
    length = 60.0

    [initial_data]
    kind = "ground_state_multiple"
    amplitude = 1.2

    [solver]            # SolverConfig field names; k comes from the top level
    t_end = 3.0
    dt_floor = 8e-6

    [outputs]
    directory = "runs"
    snapshot_every = 1  # write a snapshot every n-th report (0: none)

    [[sweep]]           # optional; one run per entry
    label = "A0.8"
    "initial_data.amplitude" = 0.8

Initial-data kinds: ``ground_state_multiple`` (``amplitude``), ``soliton``
(``c``, ``x0``), ``gaussian`` (``width``, ``amplitude``, ``x0``),
``snapshot`` (``path``), ``synthesis`` (``profiles``: list of ``{h, x0,
t0, shape, amplitude, width}`` with ``shape`` one of ``odd_gaussian``,
``mexican_hat``) and ``noise`` (``seed``, ``amplitude``, ``cutoff``).

Every output except ``metadata.json`` is a pure function of the spec.
"""

from __future__ import annotations

import copy
import csv
import datetime as _dt
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import SolverConfig, run, run_refined
from .errors import ContractError, LabError
from .functionals import CSV_HEADER, fmt
from .ground_state import ground_state_profile, soliton
from .profiles import ProfileParams, synthesize
from .spectral import Field, Grid1D, read_snapshot, write_snapshot

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as _toml

INITIAL_KINDS = ("ground_state_multiple", "soliton", "gaussian", "snapshot", "synthesis", "noise")
_TOP_KEYS = {"name", "k", "initial_data", "grid", "solver", "outputs", "sweep", "refine"}

EXIT_OK, EXIT_INVALID, EXIT_INCONCLUSIVE = 0, 1, 2


class SpecError(ContractError):
    """Invalid experiment specification; ``line`` points into the source text."""

    def __init__(self, message: str, line: int | None = None, source: str = "<spec>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)


@dataclass
class ExperimentSpec:
    name: str
    k: int
    initial_data: dict
    grid: dict
    solver: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)
    refine: int = 1
    base_dir: Path = Path(".")

    def grid_obj(self) -> Grid1D:
        return Grid1D(self.grid["n_points"], self.grid["length"])

    def solver_config(self) -> SolverConfig:
        return SolverConfig.from_mapping({**self.solver, "k": self.k})

    def output_dir(self) -> Path:
        d = Path(self.outputs.get("directory", "runs"))
        return d if d.is_absolute() else self.base_dir / d

    def to_mapping(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "initial_data": self.initial_data,
            "grid": self.grid,
            "solver": self.solver,
            "outputs": self.outputs,
            "refine": self.refine,
        }


def _line_of(text: str, key: str) -> int | None:
    """First line mentioning ``key`` as a JSON or TOML key."""
    leaf = key.split(".")[-1]
    pat = re.compile(r'(^|[\s{,"])' + re.escape(leaf) + r'"?\s*[:=]')
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


def parse_spec(text: str, fmt: str = "json", source: str = "<spec>", base_dir=".") -> ExperimentSpec:
    """
    Parse and validate a spec.

    Raises
    ------
    SpecError
        With a ``source:line:`` prefix pointing at the offending key when it
        can be located.
    """

    def fail(msg: str, key: str | None = None):
        raise SpecError(msg, _line_of(text, key) if key else None, source)

    try:
        data = json.loads(text) if fmt == "json" else _toml.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed JSON: {exc.msg}", exc.lineno, source) from None
    except _toml.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise SpecError(f"malformed TOML: {exc}", int(m.group(1)) if m else None, source) from None
    if not isinstance(data, dict):
        fail("spec must be a mapping")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        fail(f"unknown key {unknown[0]!r}", unknown[0])
    for key in ("k", "initial_data", "grid"):
        if key not in data:
            fail(f"missing required key {key!r}")

    k = data["k"]
    if isinstance(k, bool) or not isinstance(k, int) or k < 4:
        fail("k must be >= 4", "k")

    grid = data["grid"]
    if not isinstance(grid, dict) or set(grid) - {"n_points", "length"} or len(grid) != 2:
        fail("grid needs exactly n_points and length", "grid")
    try:
        Grid1D(grid["n_points"], grid["length"])
    except ContractError as exc:
        fail(str(exc), "n_points" if "n_points" in str(exc) else "length")

    solver = data.get("solver", {})
    if not isinstance(solver, dict):
        fail("solver must be a mapping", "solver")
    if "k" in solver:
        fail("set k at the top level, not inside solver", "solver")
    try:
        SolverConfig.from_mapping({**solver, "k": k})
    except (ContractError, TypeError) as exc:
        bad = next((name for name in solver if name in str(exc)), "solver")
        fail(str(exc), bad)

    init = data["initial_data"]
    _check_initial(init, fail)

    outputs = data.get("outputs", {})
    if not isinstance(outputs, dict) or set(outputs) - {"directory", "snapshot_every"}:
        fail("outputs accepts directory and snapshot_every", "outputs")
    every = outputs.get("snapshot_every", 1)
    if isinstance(every, bool) or not isinstance(every, int) or every < 0:
        fail("snapshot_every must be a non-negative integer", "snapshot_every")

    refine = data.get("refine", 1)
    if isinstance(refine, bool) or not isinstance(refine, int) or refine < 1 or refine & (refine - 1):
        fail("refine must be 1 or a power of two", "refine")

    sweep = data.get("sweep", [])
    if not isinstance(sweep, list):
        fail("sweep must be a list of override tables", "sweep")
    labels = []
    for i, entry in enumerate(sweep):
        if not isinstance(entry, dict):
            fail(f"sweep entry {i} must be a mapping", "sweep")
        label = str(entry.get("label", f"run{i:03d}"))
        if not re.fullmatch(r"[A-Za-z0-9._+-]+", label):
            fail(f"sweep label {label!r} is not a safe directory name", "label")
        labels.append(label)
    if len(set(labels)) != len(labels):
        fail("sweep labels must be distinct (they name output directories)", "sweep")

    spec = ExperimentSpec(
        name=str(data.get("name", "experiment")),
        k=k,
        initial_data=init,
        grid=grid,
        solver=solver,
        outputs=outputs,
        sweep=sweep,
        refine=refine,
        base_dir=Path(base_dir),
    )
    # every sweep member must itself be valid
    for i, entry in enumerate(sweep):
        try:
            expand(spec, entry)
        except SpecError:
            raise
        except (ContractError, TypeError, KeyError) as exc:
            key = next((kk for kk in entry if kk != "label"), "sweep")
            fail(f"sweep entry {i}: {exc}", key)
    return spec


def _check_initial(init, fail) -> None:
    if not isinstance(init, dict) or "kind" not in init:
        fail("initial_data needs a kind", "initial_data")
    kind = init["kind"]
    allowed = {
        "ground_state_multiple": {"amplitude"},
        "soliton": {"c", "x0"},
        "gaussian": {"width", "amplitude", "x0"},
        "snapshot": {"path"},
        "synthesis": {"profiles", "t"},
        "noise": {"seed", "amplitude", "cutoff"},
    }
    if kind not in allowed:
        fail(f"unknown initial_data kind {kind!r}; expected one of {', '.join(INITIAL_KINDS)}", "kind")
    extra = set(init) - allowed[kind] - {"kind"}
    if extra:
        bad = sorted(extra)[0]
        fail(f"initial_data kind {kind!r} does not take {bad!r}", bad)
    if kind == "soliton" and not init.get("c", 1.0) > 0:
        fail("soliton speed c must be positive", "c")
    if kind == "gaussian" and not init.get("width", 1.0) > 0:
        fail("gaussian width must be positive", "width")
    if kind == "snapshot" and "path" not in init:
        fail("snapshot initial data needs a path", "initial_data")
    if kind == "synthesis":
        profiles = init.get("profiles")
        if not isinstance(profiles, list) or not profiles:
            fail("synthesis needs a non-empty profiles list", "profiles")
        for p in profiles:
            if p.get("shape", "odd_gaussian") not in ("odd_gaussian", "mexican_hat"):
                fail(f"unknown profile shape {p.get('shape')!r}", "shape")
            if not p.get("h", 0) > 0:
                fail("profile scale h must be positive", "h")


def _set_dotted(data: dict, path: str, value) -> None:
    parts = path.split(".")
    node = data
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ContractError(f"override path {path!r} does not exist")
        node = node[part]
    node[parts[-1]] = value


def expand(spec: ExperimentSpec, entry: dict) -> tuple[str, ExperimentSpec]:
    """Apply one sweep entry (dotted-path overrides) to ``spec``."""
    data = copy.deepcopy(spec.to_mapping())
    for key, value in entry.items():
        if key == "label":
            continue
        if key == "k":
            data["k"] = value
            continue
        _set_dotted(data, key, value)
    label = str(entry.get("label", ""))
    out = ExperimentSpec(base_dir=spec.base_dir, **data)
    SolverConfig.from_mapping({**out.solver, "k": out.k})
    out.grid_obj()
    return label, out


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc.strerror}", None, str(path)) from None
    fmt = "toml" if path.suffix.lower() == ".toml" else "json"
    return parse_spec(text, fmt, source=str(path), base_dir=path.parent)


# ---------------------------------------------------------------------------
# initial data


def _shape(name: str, y: np.ndarray) -> np.ndarray:
    if name == "odd_gaussian":
        return y * np.exp(-0.5 * y**2)
    return (1.0 - y**2) * np.exp(-0.5 * y**2)


def build_initial(spec: ExperimentSpec, grid: Grid1D) -> Field:
    init = spec.initial_data
    kind = init["kind"]
    k = spec.k
    if kind == "ground_state_multiple":
        return Field(grid, init.get("amplitude", 1.0) * ground_state_profile(grid.x, k))
    if kind == "soliton":
        return soliton(k, init.get("c", 1.0), grid, init.get("x0", 0.0))
    if kind == "gaussian":
        w = init.get("width", 1.0)
        x0 = init.get("x0", 0.0)
        return Field(grid, init.get("amplitude", 1.0) * np.exp(-(((grid.x - x0) / w) ** 2)))
    if kind == "snapshot":
        p = Path(init["path"])
        f, _ = read_snapshot(p if p.is_absolute() else spec.base_dir / p)
        if f.grid == grid:
            return f
        if f.grid.length != grid.length:
            raise ContractError("snapshot box length differs from the spec grid")
        return _resample(f, grid)
    if kind == "noise":
        rng = np.random.default_rng(init.get("seed", 0))
        cutoff = init.get("cutoff", 4.0)
        n = grid.n_points
        coeffs = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
        coeffs[0] = 0.0
        coeffs[grid.rxi > cutoff] = 0.0
        v = np.fft.irfft(coeffs, n=n)
        peak = np.max(np.abs(v))
        return Field(grid, init.get("amplitude", 1.0) * v / (peak if peak > 0 else 1.0))
    # synthesis
    profiles = []
    for p in init["profiles"]:
        y = grid.x / p.get("width", 1.0)
        psi = Field(grid, p.get("amplitude", 1.0) * _shape(p.get("shape", "odd_gaussian"), y))
        profiles.append(ProfileParams(p["h"], p.get("x0", 0.0), p.get("t0", 0.0), psi))
    return synthesize(profiles, init.get("t", 0.0), grid, k)


def _resample(f: Field, grid: Grid1D) -> Field:
    """Spectral zero-padding / truncation onto a grid of the same box."""
    n_old, n_new = f.grid.n_points, grid.n_points
    c = np.fft.rfft(f.values)
    m = min(n_old, n_new) // 2
    out = np.zeros(n_new // 2 + 1, dtype=complex)
    out[:m] = c[:m]
    return Field(grid, np.fft.irfft(out, n=n_new) * (n_new / n_old))


# ---------------------------------------------------------------------------
# running


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _write_run(outdir: Path, spec: ExperimentSpec, grid: Grid1D, state, verdict, reports,
               snapshot_every: int) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "reports.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in reports:
            w.writerow(r.row())
    if snapshot_every:
        snapdir = outdir / "snapshots"
        for i, (t, f) in enumerate(state.snapshots):
            if i % snapshot_every == 0 or i == len(state.snapshots) - 1:
                write_snapshot(snapdir / f"snap_{i:05d}", f, t, spec.k)
    acc = state.strichartz_acc
    _dump_json(outdir / "strichartz.json", acc.summary())
    with open(outdir / "strichartz_history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [f"p={fmt(p)};q={fmt(q)};s={fmt(s)}" for p, q, s in acc.tracked_pairs])
        for t, norms in acc.history:
            w.writerow([fmt(t)] + [fmt(norms[key]) for key in acc.tracked_pairs])
    _dump_json(
        outdir / "verdict.json",
        {
            **verdict.to_dict(),
            "events": [{"time": t, "kind": kind, **payload} for t, kind, payload in state.events],
            "grid": {"n_points": grid.n_points, "length": grid.length},
        },
    )


def run_experiment(spec: ExperimentSpec, outdir=None) -> dict:
    """
    Run one spec (no sweep expansion) and write its artifacts.

    Returns a summary with the verdict dict, the exit code and the output
    directory.
    """
    outdir = Path(outdir) if outdir is not None else spec.output_dir() / spec.name
    grid = spec.grid_obj()
    cfg = spec.solver_config()
    every = spec.outputs.get("snapshot_every", 1)
    if every == 0:
        cfg = SolverConfig.from_mapping({**cfg.to_mapping(), "keep_snapshots": False})

    if spec.refine > 1:
        (b_state, b_verdict, b_reports), (f_state, f_verdict, f_reports), agree, verdict = run_refined(
            lambda g: build_initial(spec, g), grid, cfg, factor=spec.refine
        )
        _write_run(outdir, spec, grid, b_state, verdict, b_reports, every)
        _write_run(outdir / "refined", spec, grid.refined(spec.refine), f_state, f_verdict,
                   f_reports, every)
        _dump_json(outdir / "refinement.json", {
            "agree": agree,
            "base_fired": b_verdict.fired,
            "refined_fired": f_verdict.fired,
            "factor": spec.refine,
        })
    else:
        u0 = build_initial(spec, grid)
        state, verdict, reports = run(u0, cfg)
        _write_run(outdir, spec, grid, state, verdict, reports, every)

    _dump_json(outdir / "spec.json", spec.to_mapping())
    _dump_json(outdir / "metadata.json", {
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "package": "gkdv_lab",
    })
    code = EXIT_INCONCLUSIVE if verdict.inconclusive else EXIT_OK
    return {"name": spec.name, "outdir": str(outdir), "verdict": verdict.to_dict(), "exit_code": code}


def _run_member(args):
    label, member, outdir = args
    try:
        return run_experiment(member, outdir)
    except LabError as exc:
        return {"name": label, "outdir": str(outdir), "error": str(exc), "exit_code": EXIT_INVALID}


def worker_cap(jobs: int | None) -> int:
    """``--jobs`` bounded by ``GKDV_LAB_THREADS`` (if set) and at least 1."""
    n = jobs if jobs and jobs > 0 else 1
    env = os.environ.get("GKDV_LAB_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ContractError(f"GKDV_LAB_THREADS must be an integer, got {env!r}") from None
    return n


def run_sweep(spec: ExperimentSpec, jobs: int | None = 1, outdir=None) -> list[dict]:
    """
    Run every sweep member (or the spec itself when there is no sweep).
    Members write to disjoint directories ``<outdir>/<label>``.
    """
    root = Path(outdir) if outdir is not None else spec.output_dir() / spec.name
    if not spec.sweep:
        return [run_experiment(spec, root)]
    tasks = []
    for i, entry in enumerate(spec.sweep):
        label, member = expand(spec, entry)
        label = label or f"run{i:03d}"
        member.name = f"{spec.name}-{label}"
        tasks.append((label, member, root / label))
    n = min(worker_cap(jobs), len(tasks))
    if n == 1:
        results = [_run_member(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_member, tasks))
    root.mkdir(parents=True, exist_ok=True)
    _dump_json(root / "sweep.json", [
        {"label": t[0], "exit_code": r["exit_code"], "verdict": r.get("verdict"), "error": r.get("error")}
        for t, r in zip(tasks, results)
    ])
    return results
