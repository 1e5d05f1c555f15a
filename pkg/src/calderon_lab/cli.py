"""Command-line harness: scenario files, experiment runs, artifacts and golden comparison.

Usage::

    calderon-lab verify-all --out artifacts
    calderon-lab greens --config scenario.json --out out/greens --threads 4
    calderon-lab compare-golden out/verify golden/verify

Every subcommand writes ``summary.json`` (checks with measured values and
tolerances, byte-identical across reruns), ``timings.json`` and, per
experiment, CSV tables, two-column ``.dat`` plot files and a
``report.json``.  The exit status is 0 when all checks pass, 1 when some
check fails and 2 on configuration errors.

Heavy modules are imported inside the functions so that ``--threads``
can set the BLAS thread count before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import CalderonLabError, ConfigError

THREADS_ENV = "CALDERON_LAB_THREADS"
SUBCOMMANDS = ("forward", "dnmap", "gauge", "zcoords", "greens", "runge", "verify-all")
THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


# ---------------------------------------------------------------- config


def load_schema() -> dict:
    """The published scenario schema."""
    text = resources.files("calderon_lab").joinpath("schema/scenario.json").read_text()
    return json.loads(text)


def validate_config(cfg: dict) -> dict:
    """Validate a scenario dictionary.

    Raises
    ------
    ConfigError
        Naming the offending field path, e.g. ``grid.N_t``.
    """
    import jsonschema

    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {err.message}")
    if "patch" in cfg:
        n = cfg.get("grid", {}).get("n", 3)
        for key in ("lower", "upper"):
            if len(cfg["patch"][key]) != n - 1:
                raise ConfigError(f"patch.{key}: expected {n - 1} coordinates, got {len(cfg['patch'][key])}")
    return cfg


def load_config(path: str | os.PathLike | None) -> dict:
    """Read and validate a JSON scenario; ``None`` gives the empty (default) scenario."""
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return validate_config(cfg)


def default_plan(command: str, N: int) -> list:
    """Experiments run by a subcommand when the scenario lists none.

    ``verify-all`` runs every group.  The Z-coordinate decay exponent is
    measured on the doubled grid because at the base resolution the
    discretization floor of the Z difference hides the decay at the
    shallowest depths.
    """
    from .experiments import GROUPS

    if command == "verify-all":
        names = [name for group in GROUPS.values() for name in group]
    else:
        names = list(GROUPS[command])
    plan = []
    for name in names:
        options = {}
        if command == "verify-all" and name == "zcoords.decay":
            options = {"N": 2 * N}
        plan.append({"name": name, "options": options})
    return plan


def select_plan(command: str, cfg: dict, N: int) -> list:
    """Experiments of ``command`` from the scenario, or the defaults when none are listed."""
    if "experiments" not in cfg:
        return default_plan(command, N)
    plan = [dict(e) for e in cfg["experiments"]]
    if command != "verify-all":
        plan = [e for e in plan if e["name"].split(".")[0] == command]
    return plan


# ---------------------------------------------------------------- artifacts


def _clean(value, digits: int = 12):
    """JSON-ready copy with floats rounded to ``digits`` significant digits."""
    import numpy as np

    if isinstance(value, dict):
        return {str(k): _clean(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist(), digits)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return str(v)
        return float(f"{v:.{digits}g}")
    if value is None or isinstance(value, str):
        return value
    return str(value)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _write_outputs(folder: Path, result) -> None:
    import numpy as np

    folder.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in sorted(result.tables.items()):
        np.savetxt(folder / name, np.atleast_2d(np.asarray(rows, float)), delimiter=",", fmt="%.12g",
                   header=",".join(header), comments="")
    for name, (x, y) in sorted(result.series.items()):
        np.savetxt(folder / name, np.column_stack([x, y]), fmt="%.12g")
    _dump_json(folder / "report.json", result.report)


@dataclass
class RunSummary:
    """Outcome of :func:`run`."""

    command: str
    experiments: list
    timings: dict = field(default_factory=dict)

    @property
    def checks(self) -> int:
        return sum(len(e["checks"]) for e in self.experiments)

    @property
    def failures(self) -> list:
        return [f"{e['name']}:{c['name']}" for e in self.experiments for c in e["checks"] if not c["passed"]]

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {"command": self.command, "passed": self.passed, "checks": self.checks,
                "failures": self.failures, "experiments": self.experiments}


def run(command: str, cfg: dict, out: str | os.PathLike, seed: int | None = None, log=None) -> RunSummary:
    """Run the experiments of ``command`` for a validated scenario and write artifacts to ``out``."""
    from .experiments import Scenario, run_experiment

    scn = Scenario.from_config(cfg)
    if seed is not None:
        scn.seed = int(seed)
    plan = select_plan(command, cfg, scn.N)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = RunSummary(command, [])
    for entry in plan:
        name, options = entry["name"], entry.get("options", {})
        try:
            res = run_experiment(scn, name, options)
        except CalderonLabError as exc:
            exc.args = (f"experiment {name}: {exc}",) + tuple(exc.args[1:])
            raise
        _write_outputs(out / name.replace(".", "_"), res)
        record = res.as_dict()
        record["options"] = options
        summary.experiments.append(record)
        summary.timings[name] = round(res.seconds, 3)
        if log is not None:
            verdict = "PASS" if res.passed else "FAIL"
            log(f"{verdict} {name} ({res.seconds:.1f}s)")
    scenario = {"grid": {"n": scn.n, "N_t": scn.N_t, "N_n": scn.N_n}, "metric": scn.metric, "factor": scn.factor,
                "diffeo": scn.diffeo, "patch": scn.patch, "seed": scn.seed}
    body = summary.as_dict()
    body["scenario"] = scenario
    _dump_json(out / "summary.json", body)
    _dump_json(out / "timings.json", summary.timings)
    return summary


# ---------------------------------------------------------------- goldens


@dataclass
class GoldenReport:
    """Differences between an artifact directory and a golden directory."""

    entries: list = field(default_factory=list)
    compared: int = 0

    @property
    def ok(self) -> bool:
        return not self.entries

    def as_dict(self) -> dict:
        return {"ok": self.ok, "compared": self.compared, "entries": self.entries}


def _compare_values(a, b, where: str, rtol: float, atol: float, out: list) -> None:
    if isinstance(b, dict):
        if not isinstance(a, dict):
            out.append({"path": where, "kind": "type", "golden": "object", "artifact": type(a).__name__})
            return
        for k in sorted(b):
            if k not in a:
                out.append({"path": f"{where}.{k}", "kind": "missing"})
            else:
                _compare_values(a[k], b[k], f"{where}.{k}", rtol, atol, out)
        return
    if isinstance(b, list):
        if not isinstance(a, list) or len(a) != len(b):
            out.append({"path": where, "kind": "length", "golden": len(b),
                        "artifact": len(a) if isinstance(a, list) else None})
            return
        for i, (x, y) in enumerate(zip(a, b)):
            _compare_values(x, y, f"{where}[{i}]", rtol, atol, out)
        return
    if isinstance(b, bool) or not isinstance(b, (int, float)):
        if a != b:
            out.append({"path": where, "kind": "value", "golden": b, "artifact": a})
        return
    if isinstance(a, bool) or not isinstance(a, (int, float)) or abs(a - b) > atol + rtol * abs(b):
        out.append({"path": where, "kind": "value", "golden": b, "artifact": a})


def compare_golden(artifact_dir, golden_dir, rtol: float = 1e-6, atol: float = 1e-12) -> GoldenReport:
    """Numeric comparison of every golden file with its artifact counterpart.

    JSON files are compared leaf by leaf and CSV / ``.dat`` files entrywise,
    both with ``|a - b| <= atol + rtol |b|``.  A ``tolerances.json`` file in
    the golden directory may override ``rtol`` / ``atol`` per file name.
    ``timings.json`` is never compared.

    Raises
    ------
    FileNotFoundError
        If either directory does not exist.
    """
    import numpy as np

    artifact_dir, golden_dir = Path(artifact_dir), Path(golden_dir)
    for d in (artifact_dir, golden_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"directory {d} does not exist")
    tol_file = golden_dir / "tolerances.json"
    overrides = json.loads(tol_file.read_text()) if tol_file.exists() else {}
    report = GoldenReport()
    for gpath in sorted(golden_dir.rglob("*")):
        if gpath.is_dir() or gpath.name in ("tolerances.json", "timings.json"):
            continue
        rel = gpath.relative_to(golden_dir).as_posix()
        apath = artifact_dir / rel
        if not apath.exists():
            report.entries.append({"file": rel, "kind": "missing_file"})
            continue
        spec = overrides.get(rel, overrides.get(gpath.name, {}))
        rt, at = float(spec.get("rtol", rtol)), float(spec.get("atol", atol))
        diffs = []
        if gpath.suffix == ".json":
            _compare_values(json.loads(apath.read_text()), json.loads(gpath.read_text()), "$", rt, at, diffs)
        else:
            skip = 1 if gpath.suffix == ".csv" else 0
            delim = "," if gpath.suffix == ".csv" else None
            A = np.atleast_1d(np.loadtxt(apath, delimiter=delim, skiprows=skip))
            B = np.atleast_1d(np.loadtxt(gpath, delimiter=delim, skiprows=skip))
            if A.shape != B.shape:
                diffs.append({"path": "$", "kind": "shape", "golden": list(B.shape), "artifact": list(A.shape)})
            else:
                bad = np.abs(A - B) > at + rt * np.abs(B)
                if bad.any():
                    idx = np.argwhere(bad)[0].tolist()
                    diffs.append({"path": f"${idx}", "kind": "value", "count": int(bad.sum()),
                                  "golden": float(B[tuple(idx)]), "artifact": float(A[tuple(idx)])})
        report.compared += 1
        report.entries.extend({"file": rel, **d} for d in diffs)
    return report


# ---------------------------------------------------------------- entry point


def set_threads(threads: int | None) -> int | None:
    """Set the BLAS and OpenMP thread count from ``threads`` or ``CALDERON_LAB_THREADS``."""
    value = threads if threads is not None else os.environ.get(THREADS_ENV)
    if value is None:
        return None
    value = int(value)
    if value < 1:
        raise ConfigError(f"--threads must be positive, got {value}")
    for var in THREAD_VARIABLES:
        os.environ[var] = str(value)
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calderon-lab",
                                     description="Numerical lab for the conformal Laplacian inverse problem on slabs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiments")
        p.add_argument("--config", help="JSON scenario (validated against the shipped schema)")
        p.add_argument("--out", default=f"artifacts/{name}", help="artifact directory")
        p.add_argument("--threads", type=int, default=None, help=f"thread count (default from ${THREADS_ENV})")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    g = sub.add_parser("compare-golden", help="compare an artifact directory with goldens")
    g.add_argument("artifacts")
    g.add_argument("golden")
    g.add_argument("--rtol", type=float, default=1e-6)
    g.add_argument("--atol", type=float, default=1e-12)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare-golden":
            rep = compare_golden(args.artifacts, args.golden, args.rtol, args.atol)
            print(json.dumps(rep.as_dict(), indent=2, sort_keys=True))
            return 0 if rep.ok else 1
        set_threads(args.threads)
        cfg = load_config(args.config)
        summary = run(args.command, cfg, args.out, seed=args.seed, log=lambda s: print(s, flush=True))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CalderonLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    status = "passed" if summary.passed else f"FAILED ({len(summary.failures)} checks)"
    print(f"{summary.checks} checks {status}; summary in {Path(args.out) / 'summary.json'}")
    return 0 if summary.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
