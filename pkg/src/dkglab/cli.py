"""Command line driver: runs, inequality batches, convergence studies,
acceptance suites and restarts.

Exit codes: 0 success, 1 a suite or study failed, 2 numerical instability,
3 configuration error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import functools
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .fields import SpatialOps, load_state, save_state
from .foliation import CoverageError, StreamingHyperboloids
from .functionals import (
    BootstrapDensity,
    EnergyIdentity,
    FunctionalParams,
    GhostYNorms,
    Observables,
    Report,
    decay_fit,
    last_quarter_growth,
    mass_weighted_bounds,
)
from .inequality_lab import FAMILIES, INEQ_IDS, InequalityReport, ParameterRangeError, UnresolvedFamilyError, check
from .scattering import TailMonitor, write_scattering_json
from .solver import ConfigError, InstabilityError, Monitor, RunConfig, evolve, pde_residual
from .transforms import TransformMonitor, TransformScopeError, check_scope

log = logging.getLogger("dkglab")

EXIT_OK, EXIT_FAIL, EXIT_UNSTABLE, EXIT_CONFIG = 0, 1, 2, 3
OUT_ENV = "DKGLAB_OUT"

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_times = {"type": "array", "items": _num}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n": {"enum": [2, 3]},
        "M": {"type": "number", "minimum": 0, "maximum": 1},
        "points": {"type": "integer", "minimum": 16, "multipleOf": 2},
        "L": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "dt_factor": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "t_end": _num,
        "eps0": {"type": "number", "minimum": 0},
        "width": {"type": "number", "exclusiveMinimum": 0},
        "R0": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "u0": {"type": ["array", "null"], "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
        "coupling": {"type": "boolean"},
        "potential": {"type": "boolean"},
        "derivative": {"enum": ["spectral", "fd4"]},
        "lam": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "minimum": 0},
        "N_ord": {"type": "integer", "minimum": 0, "maximum": 3},
        "threads": {"type": ["integer", "null"], "minimum": 1},
        "seed": {"type": "integer"},
        "output": {"type": ["string", "null"]},
        "checkpoint_every": {"type": "number", "exclusiveMinimum": 0},
        "monitors": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "report_every": _pos_int,
                "observables": {"type": "object", "additionalProperties": False,
                                "properties": {"stride": _pos_int}},
                "ghost": {"type": "object", "additionalProperties": False,
                          "properties": {"stride": {"type": "integer", "minimum": 1, "maximum": 4}}},
                "bootstrap": {"type": "object", "additionalProperties": False,
                              "properties": {"stride": _pos_int, "N_ord": {"type": "integer", "minimum": 0,
                                                                           "maximum": 3}}},
                "transforms": {"type": "object", "additionalProperties": False,
                               "properties": {"times": _times}, "required": ["times"]},
                "energy": {"type": "object", "additionalProperties": False,
                           "properties": {"which": {"type": "array", "items": {"enum": ["KG", "Dirac"]}},
                                          "window": {"type": "array", "items": _num, "minItems": 2,
                                                     "maxItems": 2}}},
                "slices": {"type": "object", "additionalProperties": False,
                           "properties": {"s": _times, "part": {"enum": ["interior", "exterior", "full"]},
                                          "rmax": {"type": "number", "exclusiveMinimum": 0}},
                           "required": ["s"]},
            },
        },
        "scattering": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ladder": {"type": "array", "items": _num, "minItems": 2},
                "transformed": {"type": "boolean"},
                "delta": {"type": "number", "minimum": 0},
                "split": {"type": "boolean"},
                "hyperboloids": {"type": "boolean"},
            },
        },
        "ineq": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "id": {"enum": list(INEQ_IDS)},
                    "family": {"enum": list(FAMILIES)},
                    "samples": _pos_int,
                    "seed": {"type": "integer"},
                    "resolution": {"type": "integer", "minimum": 16, "multipleOf": 2},
                    "n": {"enum": [2, 3]},
                    "L": {"type": "number", "exclusiveMinimum": 0},
                    "Lambda": _num,
                    "lambda": _num,
                    "refine": {"type": "boolean"},
                },
                "required": ["id"],
            },
        },
    },
}

_PLAN_KEYS = ("scattering", "ineq", "checkpoint_every")


class ConfigFileError(Exception):
    """The configuration file is missing, unreadable or invalid."""


def load_config(source) -> tuple[RunConfig, dict]:
    """Validate a config (path or mapping) and split it into a RunConfig and
    the remaining plan (scattering ladder, inequality batches, checkpoints)."""
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        if not path.is_file():
            raise ConfigFileError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigFileError(f"{path}: invalid JSON ({exc})") from None
    else:
        doc = copy.deepcopy(dict(source))
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigFileError(f"config error at {where}: {exc.message}") from None
    plan = {k: doc.pop(k) for k in _PLAN_KEYS if k in doc}
    if doc.get("u0") is not None:
        doc["u0"] = [complex(a, b) for a, b in doc["u0"]]
    n = doc.pop("n", 2)
    try:
        cfg = RunConfig.defaults(n, **doc)
    except (ConfigError, TypeError) as exc:
        raise ConfigFileError(str(exc)) from None
    if not cfg.monitors:
        cfg.monitors = {"observables": {"stride": 4}}
    return cfg, plan


def config_to_json(cfg: RunConfig, plan: dict) -> dict:
    d = cfg.to_dict()
    if d.get("u0") is not None:
        d["u0"] = [[complex(z).real, complex(z).imag] for z in d["u0"]]
    d.update(plan)
    return d


def output_dir(cfg: RunConfig, name: str, override=None) -> Path:
    if override:
        out = Path(override)
    elif cfg.output:
        out = Path(cfg.output)
    else:
        out = Path(os.environ.get(OUT_ENV, "dkglab_out")) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


class CheckpointWriter(Monitor):
    """Saves the state every ``every`` time units and at the end."""

    def __init__(self, directory: Path, every: float):
        self.dir, self.every = Path(directory), every
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written = []
        self._next = None

    def _save(self, state):
        path = self.dir / f"state_t{state.t:09.4f}.dkgf"
        save_state(path, state)
        self.written.append(path)

    def start(self, state, ctx):
        self._next = state.t + self.every

    def step(self, state, ctx):
        if state.t >= self._next - 1e-9:
            self._save(state)
            self._next += self.every

    def finish(self, ctx):
        last = ctx.buffer[-1]
        if not self.written or self.written[-1] != self.dir / f"state_t{last.t:09.4f}.dkgf":
            self._save(last)


def build_monitors(cfg: RunConfig, plan: dict) -> dict:
    """Instantiate the scheduled monitors; returns them by name."""
    sched = cfg.monitors or {}
    params = FunctionalParams(lam=cfg.lam, delta=cfg.delta)
    mons = {}
    if "observables" in sched:
        mons["observables"] = Observables(sched["observables"].get("stride", 4))
    if "ghost" in sched:
        mons["ghost"] = GhostYNorms(params, sched["ghost"].get("stride", 1))
    if "bootstrap" in sched:
        b = sched["bootstrap"]
        mons["bootstrap"] = BootstrapDensity(params, b.get("N_ord", cfg.N_ord), b.get("stride", 4))
    if "transforms" in sched:
        check_scope(cfg.n, cfg.M)
        mons["transforms"] = TransformMonitor(sched["transforms"]["times"])
    if "energy" in sched:
        for which in sched["energy"].get("which", ["KG", "Dirac"]):
            mons[f"energy_{which}"] = EnergyIdentity(which, params)
    if "slices" in sched:
        sl = sched["slices"]
        fields = {"psi": "psi", "u": "v", "ut": "vt", "grad": _slice_grad}
        mons["slices"] = StreamingHyperboloids(sl["s"], fields, sl.get("part", "full"), sl.get("rmax"))
    sc = plan.get("scattering")
    if sc is not None:
        ladder = sc.get("ladder", [5.0, 10.0, 20.0, 40.0])
        mons["scattering"] = TailMonitor(ladder, sc.get("delta", cfg.delta), sc.get("transformed", False),
                                         sc.get("split", True), sc.get("hyperboloids", True))
    return mons


@functools.lru_cache(maxsize=4)
def _ops_for(grid):
    return SpatialOps(grid)


def _slice_grad(state):
    return np.array(_ops_for(state.grid).grad(state.v))


_PROVIDERS = ("observables", "ghost", "bootstrap", "transforms")


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, np.generic):
        return _finite(x.item())
    return x


def _fit_or_none(t, y, window):
    y = np.asarray(y, dtype=float)
    sel = (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
    if np.count_nonzero(sel) < 10 or not np.all(y[sel] > 0):
        return None
    f = decay_fit(t, y, window)
    return {"exponent": f.exponent, "stderr": f.stderr, "samples": f.samples, "window": list(window)}


def summarize(cfg: RunConfig, mons: dict, wall: float) -> dict:
    out = {"config": config_to_json(cfg, {}), "wall_seconds": wall}
    window = (10.0, cfg.t_end) if cfg.n == 2 else (6.0, cfg.t_end)
    ob = mons.get("observables")
    if ob is not None and ob.series.get("t"):
        t = np.array(ob.series["t"])
        out["decay"] = {k: _fit_or_none(t, ob.series[k], window) for k in ("sup_psi", "sup_v", "profile")}
        if t[-1] > window[0]:
            out["profile_last_quarter_growth"] = last_quarter_growth(t, ob.series["profile"], window)
        q = np.array(ob.series["charge"])
        out["charge_drift"] = float(np.max(np.abs(q - q[0])) / q[0]) if q[0] else 0.0
        if cfg.n == 3:
            mr = mass_weighted_bounds(ob, cfg.M)
            out["mass_weighted"] = {"constant": mr.constant, "growth": mr.growth(window)}
    if "bootstrap" in mons:
        out["bootstrap_plateau"] = mons["bootstrap"].plateau()
    for k, m in mons.items():
        if k.startswith("energy_"):
            out[k] = {"residual": m.residual(), "terms": m.terms()}
    if "transforms" in mons:
        out["transforms"] = {str(k): v for k, v in mons["transforms"].results.items()}
    return _finite(out)


@dataclasses.dataclass
class RunOutcome:
    code: int
    out: Path | None
    summary: dict
    monitors: dict
    message: str = ""


def run(source, out=None, threads=None, name=None, start_state=None) -> RunOutcome:
    """Execute a configured run and write its artifacts:

    report.csv, summary.json, scattering.json (if a ladder is configured),
    ineq/<id>.json (per batch), slices/H_s<s>.csv, checkpoints/*.dkgf,
    config.json (the normalized configuration).
    """
    try:
        cfg, plan = load_config(source)
        if threads is not None:
            cfg.threads = threads
        mons = build_monitors(cfg, plan)
    except (ConfigFileError, TransformScopeError, ValueError) as exc:
        return RunOutcome(EXIT_CONFIG, None, {}, {}, str(exc))
    if name is None:
        name = Path(source).stem if isinstance(source, (str, os.PathLike)) else "run"
    out = output_dir(cfg, name, out)
    (out / "config.json").write_text(json.dumps(_finite(config_to_json(cfg, plan)), indent=2))
    sched = cfg.monitors or {}
    providers = [mons[k] for k in _PROVIDERS if k in mons]
    every = sched.get("report_every", sched.get("observables", {}).get("stride", 4))
    report = Report(providers, every)
    order = list(mons.values()) + [report]
    if plan.get("checkpoint_every"):
        order.append(CheckpointWriter(out / "checkpoints", plan["checkpoint_every"]))
    t0 = time.time()
    code, message = EXIT_OK, ""
    try:
        evolve(start_state if start_state is not None else cfg, order, cfg=cfg)
    except InstabilityError as exc:
        code, message = EXIT_UNSTABLE, str(exc)
    except CoverageError as exc:
        return RunOutcome(EXIT_CONFIG, out, {}, mons, f"schedule outside the run: {exc}")
    wall = time.time() - t0
    report.write(out / "report.csv")
    summary = summarize(cfg, mons, wall) if code == EXIT_OK else {"instability": message}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    if code == EXIT_OK:
        if "scattering" in mons:
            write_scattering_json(out / "scattering.json", _finite(mons["scattering"].report()))
        if "slices" in mons:
            _write_slices(out / "slices", mons["slices"])
        for spec in plan.get("ineq", []):
            try:
                rep = run_ineq(spec)
            except (ParameterRangeError, UnresolvedFamilyError) as exc:
                return RunOutcome(EXIT_CONFIG, out, summary, mons, str(exc))
            write_ineq(out / "ineq", rep)
    return RunOutcome(code, out, summary, mons, message)


def _write_slices(directory: Path, mon: StreamingHyperboloids):
    directory.mkdir(parents=True, exist_ok=True)
    for s in mon.s_values:
        try:
            mon.slice(s).to_csv(directory / f"H_s{s:g}.csv")
        except CoverageError as exc:
            log.warning("slice s=%g incomplete: %s", s, exc)


def run_ineq(spec: dict) -> InequalityReport:
    spec = dict(spec)
    params = {k: spec[k] for k in ("n", "L", "resolution", "Lambda", "lambda") if k in spec}
    return check(spec["id"], spec.get("family", "mixed"), params, samples=spec.get("samples", 200),
                 seed=spec.get("seed", 0), refine=spec.get("refine", True))


def write_ineq(directory: Path, rep: InequalityReport) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{rep.ineq_id}_{rep.family}.json"
    rep.to_json(path)
    return path


# --------------------------------------------------------------------------
# convergence studies


@dataclasses.dataclass
class ConvergenceRow:
    quantity: str
    values: list
    orders: list

    @property
    def order(self):
        return self.orders[-1] if self.orders else None


def _orders(values):
    out = []
    for a, b in zip(values, values[1:]):
        if a > 0 and b > 0 and a != b:
            out.append(math.log2(a / b))
        else:
            out.append(None)
    return out


class _ResidualProbe(Monitor):
    """pde_residual at one time from the solver's ring buffer."""

    def __init__(self, t, forcing=None):
        self.t, self.forcing, self.value = t, forcing, None

    def step(self, state, ctx):
        buf = ctx.buffer
        if self.value is None and len(buf) >= 5 and abs(buf[len(buf) - 3].t - self.t) <= 0.5 * ctx.config.dt + 1e-12:
            self.value = pde_residual(buf, buf[len(buf) - 3].t, ctx.ops, self.forcing)


def convergence_study(source, levels: int = 2, t_probe: float | None = None, forcing=None) -> list:
    """Joint (dx, dt) refinement: level l uses points * 2^l and dt / 2^l.

    Returns ConvergenceRows for pde_residual (psi, v), the transform
    residuals (n=2, M=0) and the exterior energy identity residuals.
    ``forcing(grid) -> callable(t)`` supplies a manufactured forcing per level.
    """
    if levels not in (2, 3):
        raise ValueError("levels must be 2 or 3")
    cfg0, _ = load_config(source) if not isinstance(source, RunConfig) else (source, {})
    t_probe = t_probe if t_probe is not None else min(5.0, 0.5 * (2.0 + cfg0.t_end))
    data = {}
    for lvl in range(levels):
        cfg = dataclasses.replace(cfg0, points=cfg0.points * 2**lvl, dt=cfg0.dt / 2**lvl, monitors={})
        f = forcing(cfg.grid) if forcing is not None else None
        probe = _ResidualProbe(t_probe, f)
        mons = [probe]
        tm = None
        if cfg.n == 2 and cfg.M == 0 and cfg.coupling and f is None:
            tm = TransformMonitor([t_probe])
            mons.append(tm)
        energy = [EnergyIdentity(w, FunctionalParams(lam=cfg.lam, delta=cfg.delta)) for w in ("KG", "Dirac")]
        mons += energy
        evolve(cfg, mons, forcing=f)
        if probe.value is None:
            raise ConfigFileError(f"t_probe={t_probe} needs two steps on each side inside the run")
        data.setdefault("res_psi", []).append(float(probe.value[0]))
        data.setdefault("res_v", []).append(float(probe.value[1]))
        if tm is not None and tm.results:
            r = next(iter(tm.results.values()))
            data.setdefault("res_psi_tilde", []).append(r["res_psi_tilde"])
            data.setdefault("res_v_tilde", []).append(r["res_v_tilde"])
            if "res_Psi_tilde" in r:
                data.setdefault("res_Psi_tilde", []).append(r["res_Psi_tilde"])
        for e in energy:
            data.setdefault(f"energy_{e.which}", []).append(e.residual())
    return [ConvergenceRow(k, v, _orders(v)) for k, v in data.items()]


def write_convergence_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        levels = max(len(r.values) for r in rows)
        w.writerow(["quantity"] + [f"level{i}" for i in range(levels)] + ["order"])
        for r in rows:
            order = "N/A" if r.order is None else repr(r.order)
            w.writerow([r.quantity] + [repr(v) for v in r.values] + [order])


# --------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dkglab", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"dkglab {__version__}")
    p.add_argument("--threads", type=int, default=None, help="internal data-parallel width (FFT workers)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evolve a configured run and write its reports")
    r.add_argument("config", help="JSON configuration file")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<config name>)")

    q = sub.add_parser("ineq", help="evaluate one inequality on a sample family")
    q.add_argument("--ineq", required=True, choices=INEQ_IDS)
    q.add_argument("--family", default="mixed", choices=FAMILIES)
    q.add_argument("--samples", type=int, default=200)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--resolution", type=int, default=96, help="base grid points per axis")
    q.add_argument("--n", type=int, default=2, choices=(2, 3))
    q.add_argument("--L", type=float, default=16.0, help="box half width")
    q.add_argument("--Lambda", type=float, default=0.0, help="weight exponent for EXT_SOBOLEV/EXT_HARDY")
    q.add_argument("--no-refine", action="store_true", help="skip the doubled-resolution pass")
    q.add_argument("--out", help="directory for the JSON report (default $DKGLAB_OUT/ineq)")

    c = sub.add_parser("converge", help="joint (dx, dt) refinement study")
    c.add_argument("config")
    c.add_argument("--levels", type=int, default=2, choices=(2, 3))
    c.add_argument("--t-probe", type=float, default=None, help="time of the residual probes")
    c.add_argument("--out", help="directory for converge.csv")

    a = sub.add_parser("accept", help="run an acceptance suite")
    a.add_argument("suite", help="suite id: algebra, free, conservation, convergence, energy, transforms, "
                                 "decay, mass, ineq, scattering, bootstrap, all, or a criterion number 1-10")

    s = sub.add_parser("resume", help="continue a run from a checkpoint")
    s.add_argument("checkpoint", help="a checkpoints/state_t*.dkgf file written by `run`")
    s.add_argument("--config", help="configuration (default: config.json of the original run)")
    s.add_argument("--t-end", type=float, default=None)
    s.add_argument("--out", help="output directory (default <run>/resume_t<t>)")
    return p


def _cmd_run(args) -> int:
    res = run(args.config, out=args.out, threads=args.threads)
    if res.code == EXIT_CONFIG:
        print(f"dkglab: {res.message}", file=sys.stderr)
    elif res.code == EXIT_UNSTABLE:
        print(f"dkglab: {res.message}", file=sys.stderr)
    else:
        print(f"wrote {res.out}")
    return res.code


def _cmd_ineq(args) -> int:
    spec = {"id": args.ineq, "family": args.family, "samples": args.samples, "seed": args.seed,
            "resolution": args.resolution, "n": args.n, "L": args.L, "Lambda": args.Lambda,
            "refine": not args.no_refine}
    try:
        rep = run_ineq(spec)
    except (ParameterRangeError, UnresolvedFamilyError) as exc:
        print(f"dkglab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "dkglab_out")) / "ineq"
    path = write_ineq(out, rep)
    print(json.dumps(rep.to_dict(), indent=2))
    print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def _cmd_converge(args) -> int:
    try:
        cfg, _ = load_config(args.config)
        rows = convergence_study(cfg, args.levels, args.t_probe)
    except ConfigFileError as exc:
        print(f"dkglab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as exc:
        print(f"dkglab: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    out = output_dir(cfg, Path(args.config).stem + "_converge", args.out)
    write_convergence_csv(out / "converge.csv", rows)
    for r in rows:
        order = "N/A" if r.order is None else f"{r.order:.2f}"
        print(f"{r.quantity:16s} " + " ".join(f"{v:.3e}" for v in r.values) + f"  order {order}")
    return EXIT_OK


def _cmd_accept(args) -> int:
    from .acceptance import SUITES, UnknownSuiteError, run_suite

    try:
        results = run_suite(args.suite)
    except UnknownSuiteError as exc:
        print(f"dkglab: {exc}; known suites: {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def _cmd_resume(args) -> int:
    ck = Path(args.checkpoint)
    if not ck.is_file():
        print(f"dkglab: checkpoint not found: {ck}", file=sys.stderr)
        return EXIT_CONFIG
    cfg_path = Path(args.config) if args.config else ck.parent.parent / "config.json"
    try:
        state = load_state(ck)
        doc = json.loads(Path(cfg_path).read_text()) if Path(cfg_path).is_file() else None
    except (ValueError, OSError) as exc:
        print(f"dkglab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if doc is None:
        print(f"dkglab: config not found: {cfg_path}", file=sys.stderr)
        return EXIT_CONFIG
    if args.t_end is not None:
        doc["t_end"] = args.t_end
    doc["output"] = None
    out = args.out or str(ck.parent.parent / f"resume_t{state.t:.4f}")
    res = run(doc, out=out, threads=args.threads, name="resume", start_state=state)
    if res.code != EXIT_OK:
        print(f"dkglab: {res.message}", file=sys.stderr)
    else:
        print(f"wrote {res.out}")
    return res.code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads is not None and args.threads < 1:
        print("dkglab: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    cmd = {"run": _cmd_run, "ineq": _cmd_ineq, "converge": _cmd_converge, "accept": _cmd_accept,
           "resume": _cmd_resume}[args.command]
    return cmd(args)


if __name__ == "__main__":
    sys.exit(main())
