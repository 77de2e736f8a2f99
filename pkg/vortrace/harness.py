# -*- coding: utf-8 -*-
"""
Run configuration, experiment orchestration and output files.

Config files are INI with sections [run] [noise] [initial] [tracer]
[ensemble] [statistics] [corrector] [coupling] [diagnose]; see readme.md
for every key. Only VORTRACE_OUTPUT_DIR and VORTRACE_THREADS are read from
the environment. Outputs depend on (config, seed) only: the thread count
changes scheduling, never numbers.
"""

import configparser
import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from . import __version__
from . import snapshot as snapshots
from .dynamics import (
    ACCUMULATORS,
    OBSERVABLES,
    EquationKind,
    SolverOptions,
    SolverState,
    simulate_state,
)
from .errors import BlowUpError, ConfigError, InvariantError
from .linearization import coupling_report, run_coupled
from .noise import NoiseSpec, RngState
from .spectral import Convention, SpectralField, field_from_terms, random_field, reflect, truncate
from .statistics import (
    EnsembleSummary,
    asymptotic_variance_direct,
    clt_diagnostics,
    corrector,
    energy_identity_check,
    ergodic_drift,
    exact_linear_estimate,
    green_kubo_D,
    linear_corrector,
    linear_ou_diffusivity,
    martingale_parts,
    moment_monitors,
    paths_from_displacements,
    stationary_samples,
    stokes_drift,
)
from .tracer import round_trip_check, run_eulerian_tracer

logger = logging.getLogger(__name__)

ENV_OUTPUT_DIR = "VORTRACE_OUTPUT_DIR"
ENV_THREADS = "VORTRACE_THREADS"

# RNG streams outside the trajectory range
STATIONARY_STREAM = 1 << 40
CORRECTOR_STREAM = 1 << 41
CLT_MIN_SIZE = 100


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class NoiseConfig:
    form: str = "power_law"
    amplitude: float = 1.0
    exponent: float = 3.0
    overrides: Tuple[Tuple[Tuple[int, int], float], ...] = ()


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "zero"
    terms: Tuple[Tuple[str, Tuple[int, int], float], ...] = ()
    slope: float = 2.0
    norm: float = 1.0
    seed: int = 0
    path: str = ""


@dataclass(frozen=True)
class TracerConfig:
    enabled: bool = True
    x0: Tuple[float, float] = (0.0, 0.0)
    rough_start: bool = False
    round_trip: bool = True


@dataclass(frozen=True)
class EnsembleConfig:
    size: int = 16
    T: float = 10.0
    antithetic: bool = False
    green_kubo: bool = False
    stationary_samples: int = 32
    alpha: float = 0.01


@dataclass(frozen=True)
class StatisticsConfig:
    burn_in: float = 50.0
    thin: float = 1.0
    v_mode: str = "estimate"
    bootstrap: int = 500
    level: float = 0.95


@dataclass(frozen=True)
class CorrectorConfig:
    t: float = 5.0
    inner: int = 32
    method: str = "monte_carlo"
    snapshots: Tuple[str, ...] = ()


@dataclass(frozen=True)
class CouplingConfig:
    n0: int = 0
    T: float = 6.0
    size: int = 8
    xi_norm: float = 1.0
    xi_slope: float = 2.0
    xi_seed: int = 1
    tolerance: float = 1e-6


@dataclass(frozen=True)
class DiagnoseConfig:
    T: float = 0.0
    burn_in: float = 0.0
    nu: float = 0.0
    ensemble: int = 0


@dataclass(frozen=True)
class RunConfig:
    kind: EquationKind = EquationKind.LAGRANGIAN
    cutoff: int = 4
    dt: float = 1e-3
    T: float = 1.0
    convention: Convention = Convention.PHYSICAL
    nonlinear: bool = True
    backend: str = "fft"
    refine: int = 1
    every: int = 1
    observables: Tuple[str, ...] = ("energy", "enstrophy", "dissipation", "psi1", "psi2",
                                    "cum_dissipation", "disp1", "disp2")
    seed: int = 0
    threads: int = 0
    output_dir: str = "vortrace_out"
    noise: NoiseConfig = NoiseConfig()
    initial: InitialConfig = InitialConfig()
    tracer: TracerConfig = TracerConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    statistics: StatisticsConfig = StatisticsConfig()
    corrector: CorrectorConfig = CorrectorConfig()
    coupling: CouplingConfig = CouplingConfig()
    diagnose: DiagnoseConfig = DiagnoseConfig()
    source: str = ""

    # --- derived objects ---

    def options(self) -> SolverOptions:
        return SolverOptions(self.nonlinear, self.convention, self.backend, self.refine)

    def noise_spec(self) -> NoiseSpec:
        if self.noise.form == "zero":
            return NoiseSpec.zero(self.cutoff)
        return NoiseSpec.power_law(self.cutoff, self.noise.amplitude, self.noise.exponent,
                                   dict(self.noise.overrides))

    def initial_field(self) -> SpectralField:
        init = self.initial
        if init.kind == "zero":
            return SpectralField.zeros(self.cutoff)
        if init.kind == "analytic":
            return field_from_terms(self.cutoff, init.terms)
        if init.kind == "random":
            return random_field(self.cutoff, np.random.default_rng(init.seed), init.slope, init.norm)
        snap = snapshots.load(init.path)
        return truncate(snap.field, self.cutoff)

    @property
    def n0(self) -> int:
        return self.coupling.n0 or max(1, self.cutoff // 2)

    @property
    def worker_count(self) -> int:
        return self.threads or os.cpu_count() or 1

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        out["convention"] = self.convention.value
        out.pop("source")
        return out


class _Reader:
    """Typed access to a ConfigParser that collects every problem with its field path."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.problems: List[Tuple[str, str]] = []

    def get(self, section: str, key: str, default, cast: Callable):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        if raw == "":
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            self.problems.append((f"{section}.{key}", f"cannot parse {raw!r}: {exc}"))
            return default

    def require(self, ok: bool, path: str, message: str):
        if not ok:
            self.problems.append((path, message))


def _bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in configparser.ConfigParser.BOOLEAN_STATES:
        return configparser.ConfigParser.BOOLEAN_STATES[lowered]
    raise ValueError("expected a boolean")


def _int(raw: str) -> int:
    return int(raw, 0)


def _list(raw: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in raw.replace("\n", ",").split(",") if part.strip())


def _pair(raw: str) -> Tuple[float, float]:
    parts = [float(p) for p in raw.split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return parts[0], parts[1]


def _terms(raw: str):
    """'cos 1 0 2.0; sin 0 1 1.0' -> (("cos", (1, 0), 2.0), ...)"""
    out = []
    for chunk in raw.split(";"):
        words = chunk.split()
        if not words:
            continue
        if len(words) != 4 or words[0] not in ("cos", "sin"):
            raise ValueError(f"term {chunk.strip()!r} is not 'cos|sin k1 k2 amplitude'")
        out.append((words[0], (int(words[1]), int(words[2])), float(words[3])))
    return tuple(out)


def _overrides(raw: str):
    """'1,0:0.5; 0,1:0' -> (((1, 0), 0.5), ((0, 1), 0.0))"""
    out = []
    for chunk in raw.split(";"):
        if not chunk.strip():
            continue
        k, _, value = chunk.partition(":")
        k1, k2 = (int(p) for p in k.split(","))
        out.append(((k1, k2), float(value)))
    return tuple(out)


def _env_overrides(environ) -> dict:
    out = {}
    if environ.get(ENV_OUTPUT_DIR):
        out["output_dir"] = environ[ENV_OUTPUT_DIR]
    if environ.get(ENV_THREADS):
        out["threads"] = environ[ENV_THREADS]
    return out


def parse_config(text: str = "", source: str = "", overrides: Optional[dict] = None,
                 environ=None) -> RunConfig:
    """Parse INI text; precedence is overrides > environment > file > defaults."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source or "<string>")
    except configparser.Error as exc:
        raise ConfigError([("<file>", str(exc).splitlines()[0])], source) from exc
    r = _Reader(parser)
    d = RunConfig()

    known = {"run", "noise", "initial", "tracer", "ensemble", "statistics", "corrector", "coupling", "diagnose"}
    for section in parser.sections():
        r.require(section in known, section, "unknown section")

    kind = r.get("run", "kind", d.kind.value, str)
    convention = r.get("run", "convention", d.convention.value, str)
    r.require(kind in {k.value for k in EquationKind}, "run.kind", f"unknown equation kind {kind!r}")
    r.require(convention in {c.value for c in Convention}, "run.convention", f"unknown convention {convention!r}")

    run = dict(
        cutoff=r.get("run", "cutoff", d.cutoff, _int),
        dt=r.get("run", "dt", d.dt, float),
        T=r.get("run", "T", d.T, float),
        nonlinear=r.get("run", "nonlinear", d.nonlinear, _bool),
        backend=r.get("run", "backend", d.backend, str),
        refine=r.get("run", "refine", d.refine, _int),
        every=r.get("run", "every", d.every, _int),
        observables=r.get("run", "observables", d.observables, _list),
        seed=r.get("run", "seed", d.seed, _int),
        threads=r.get("run", "threads", d.threads, _int),
        output_dir=r.get("run", "output_dir", d.output_dir, str),
    )
    for key, value in {**_env_overrides(environ if environ is not None else os.environ), **(overrides or {})}.items():
        if value is None:
            continue
        try:
            run[key] = type(getattr(d, key))(value)
        except (TypeError, ValueError):
            r.problems.append((f"run.{key}", f"cannot use override {value!r}"))

    noise = NoiseConfig(
        form=r.get("noise", "form", "power_law", str),
        amplitude=r.get("noise", "amplitude", 1.0, float),
        exponent=r.get("noise", "exponent", 3.0, float),
        overrides=r.get("noise", "overrides", (), _overrides),
    )
    initial = InitialConfig(
        kind=r.get("initial", "kind", "zero", str),
        terms=r.get("initial", "terms", (), _terms),
        slope=r.get("initial", "slope", 2.0, float),
        norm=r.get("initial", "norm", 1.0, float),
        seed=r.get("initial", "seed", 0, _int),
        path=r.get("initial", "path", "", str),
    )
    tracer = TracerConfig(
        enabled=r.get("tracer", "enabled", True, _bool),
        x0=r.get("tracer", "x0", (0.0, 0.0), _pair),
        rough_start=r.get("tracer", "rough_start", False, _bool),
        round_trip=r.get("tracer", "round_trip", True, _bool),
    )
    ensemble = EnsembleConfig(
        size=r.get("ensemble", "size", 16, _int),
        T=r.get("ensemble", "T", run["T"], float),
        antithetic=r.get("ensemble", "antithetic", False, _bool),
        green_kubo=r.get("ensemble", "green_kubo", False, _bool),
        stationary_samples=r.get("ensemble", "stationary_samples", 32, _int),
        alpha=r.get("ensemble", "alpha", 0.01, float),
    )
    statistics = StatisticsConfig(
        burn_in=r.get("statistics", "burn_in", 50.0, float),
        thin=r.get("statistics", "thin", 1.0, float),
        v_mode=r.get("statistics", "v_mode", "estimate", str),
        bootstrap=r.get("statistics", "bootstrap", 500, _int),
        level=r.get("statistics", "level", 0.95, float),
    )
    corrector_cfg = CorrectorConfig(
        t=r.get("corrector", "t", 5.0, float),
        inner=r.get("corrector", "inner", 32, _int),
        method=r.get("corrector", "method", "monte_carlo", str),
        snapshots=r.get("corrector", "snapshots", (), _list),
    )
    coupling = CouplingConfig(
        n0=r.get("coupling", "n0", 0, _int),
        T=r.get("coupling", "T", 6.0, float),
        size=r.get("coupling", "size", 8, _int),
        xi_norm=r.get("coupling", "xi_norm", 1.0, float),
        xi_slope=r.get("coupling", "xi_slope", 2.0, float),
        xi_seed=r.get("coupling", "xi_seed", 1, _int),
        tolerance=r.get("coupling", "tolerance", 1e-6, float),
    )
    diagnose = DiagnoseConfig(
        T=r.get("diagnose", "T", 0.0, float),
        burn_in=r.get("diagnose", "burn_in", 0.0, float),
        nu=r.get("diagnose", "nu", 0.0, float),
        ensemble=r.get("diagnose", "ensemble", 0, _int),
    )

    _validate(r, run, noise, initial, ensemble, statistics, corrector_cfg, coupling, diagnose)
    if r.problems:
        raise ConfigError(r.problems, source)
    return RunConfig(
        kind=EquationKind(kind), convention=Convention(convention), noise=noise, initial=initial,
        tracer=tracer, ensemble=ensemble, statistics=statistics, corrector=corrector_cfg,
        coupling=coupling, diagnose=diagnose, source=source, **run,
    )


def _multiple(value: float, dt: float) -> bool:
    n = round(value / dt)
    return abs(n * dt - value) <= 1e-9 * max(1.0, value)


def _validate(r: _Reader, run, noise, initial, ensemble, statistics, corrector_cfg, coupling, diagnose):
    dt = run["dt"]
    r.require(run["cutoff"] >= 1, "run.cutoff", "must be >= 1")
    r.require(dt > 0, "run.dt", "must be > 0")
    r.require(run["T"] >= 0, "run.T", "must be >= 0")
    if dt > 0:
        for path, value in (("run.T", run["T"]), ("ensemble.T", ensemble.T), ("coupling.T", coupling.T),
                            ("corrector.t", corrector_cfg.t), ("diagnose.T", diagnose.T)):
            r.require(value < 0 or _multiple(value, dt), path, f"{value} is not a multiple of run.dt={dt}")
    r.require(run["backend"] in ("fft", "direct"), "run.backend", "must be 'fft' or 'direct'")
    r.require(run["refine"] >= 1, "run.refine", "must be >= 1")
    r.require(run["every"] >= 1, "run.every", "must be >= 1")
    r.require(0 <= run["seed"] < 1 << 64, "run.seed", "must fit in 64 unsigned bits")
    r.require(run["threads"] >= 0, "run.threads", "must be >= 0 (0 = all cores)")
    for name in run["observables"]:
        r.require(name in OBSERVABLES or name in ACCUMULATORS, "run.observables", f"unknown observable {name!r}")

    r.require(noise.form in ("power_law", "zero"), "noise.form", "must be 'power_law' or 'zero'")
    for k, _ in noise.overrides:
        r.require(k != (0, 0), "noise.overrides", "mode (0,0) is not part of the field")

    r.require(initial.kind in ("zero", "analytic", "random", "snapshot"), "initial.kind",
              "must be zero, analytic, random or snapshot")
    if initial.kind == "analytic":
        r.require(bool(initial.terms), "initial.terms", "analytic initial data needs at least one term")
        for _, k, _ in initial.terms:
            r.require(k != (0, 0) and max(abs(k[0]), abs(k[1])) <= run["cutoff"], "initial.terms",
                      f"mode {k} is zero or beyond the cutoff")
    if initial.kind == "snapshot":
        r.require(bool(initial.path) and Path(initial.path).is_file(), "initial.path", "snapshot file not found")

    r.require(ensemble.size >= 1, "ensemble.size", "must be >= 1")
    r.require(ensemble.T > 0, "ensemble.T", "must be > 0")
    r.require(0 < ensemble.alpha < 1, "ensemble.alpha", "must lie in (0, 1)")
    r.require(ensemble.stationary_samples >= 2, "ensemble.stationary_samples", "must be >= 2")
    r.require(statistics.burn_in >= 0, "statistics.burn_in", "must be >= 0")
    r.require(statistics.thin >= dt > 0, "statistics.thin", "must be >= run.dt")
    r.require(statistics.v_mode in ("estimate", "zero"), "statistics.v_mode", "must be 'estimate' or 'zero'")
    r.require(statistics.bootstrap >= 10, "statistics.bootstrap", "must be >= 10")
    r.require(0 < statistics.level < 1, "statistics.level", "must lie in (0, 1)")
    r.require(corrector_cfg.t > 0, "corrector.t", "must be > 0")
    r.require(corrector_cfg.inner >= 1, "corrector.inner", "must be >= 1")
    r.require(corrector_cfg.method in ("monte_carlo", "linear_exact"), "corrector.method",
              "must be 'monte_carlo' or 'linear_exact'")
    r.require(corrector_cfg.method != "linear_exact" or not run["nonlinear"], "corrector.method",
              "linear_exact needs run.nonlinear = false")
    r.require(0 <= coupling.n0 <= run["cutoff"], "coupling.n0", "must lie in [0, run.cutoff] (0 = cutoff // 2)")
    r.require(coupling.T >= 0, "coupling.T", "must be >= 0")
    r.require(coupling.size >= 1, "coupling.size", "must be >= 1")
    r.require(0 < coupling.xi_norm <= 1, "coupling.xi_norm", "must lie in (0, 1]")
    r.require(diagnose.T >= 0, "diagnose.T", "must be >= 0")
    r.require(diagnose.nu >= 0, "diagnose.nu", "must be >= 0 (0 = default 1 / (4 |Q|))")
    r.require(diagnose.ensemble >= 0, "diagnose.ensemble", "must be >= 0")


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None, environ=None) -> RunConfig:
    text = ""
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([("--config", f"cannot read {path}: {exc.strerror}")], path) from exc
    return parse_config(text, path or "", overrides, environ)


# ---------------------------------------------------------------- output


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path: Path, data: dict) -> Path:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_manifest(out: Path, command: str, cfg: RunConfig, extra: Optional[dict] = None) -> Path:
    data = {
        "vortrace_version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "noise": cfg.noise_spec().describe(),
        "snapshot_geometry": "square cutoff max(|k1|,|k2|) <= N, half lattice",
    }
    data.update(extra or {})
    return write_json(out / "manifest.json", data)


def write_record_csv(path: Path, record) -> Path:
    header = record.columns + ["convention=" + record.final.options.convention.value]
    rows = [row + ("",) for row in record.rows()]
    return write_csv(path, header, rows)


# ---------------------------------------------------------------- work queue


def run_parallel(fn: Callable, jobs: Sequence, threads: int, desc: str = "", progress: bool = False) -> list:
    """Run fn over jobs on a thread pool; results are returned in job order."""
    results: List = [None] * len(jobs)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = {pool.submit(fn, job): i for i, job in enumerate(jobs)}
        with tqdm(total=len(jobs), desc=desc, disable=not progress, leave=False) as bar:
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                bar.update(1)
    return results


@dataclass
class Trajectory:
    index: int
    rng: RngState
    w0: SpectralField
    x0: np.ndarray


def ensemble_members(cfg: RunConfig, size: int, w0: SpectralField) -> List[Trajectory]:
    """Stream i (or i // 2 with antithetic pairs, odd members reflected)."""
    x0 = np.asarray(cfg.tracer.x0, dtype=float)
    members = []
    for i in range(size):
        if cfg.ensemble.antithetic:
            mirrored = i % 2 == 1
            rng = RngState(cfg.seed, i // 2, 0, mirrored)
            members.append(Trajectory(i, rng, reflect(w0) if mirrored else w0, -x0 if mirrored else x0))
        else:
            members.append(Trajectory(i, RngState(cfg.seed, i), w0, x0))
    return members


# ---------------------------------------------------------------- commands


@dataclass
class CommandResult:
    command: str
    out: Path
    summary: dict = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)


def _prepare(cfg: RunConfig, out: Optional[str]) -> Path:
    path = Path(out or cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _start_state(cfg: RunConfig, resume: Optional[str]) -> SolverState:
    noise = cfg.noise_spec()
    if resume:
        snap = snapshots.load(resume)
        if snap.cutoff != cfg.cutoff:
            raise ConfigError([("--resume", f"snapshot cutoff {snap.cutoff} differs from run.cutoff {cfg.cutoff}")])
        logger.info("resuming from %s at t=%g", resume, snap.t)
        return snap.to_state(cfg.kind, noise, cfg.dt, cfg.options())
    return SolverState(cfg.kind, cfg.initial_field(), cfg.dt, RngState(cfg.seed), noise, options=cfg.options())


def run_simulate(cfg: RunConfig, out: Optional[str] = None, resume: Optional[str] = None,
                 progress: bool = False) -> CommandResult:
    path = _prepare(cfg, out)
    state = _start_state(cfg, resume)
    result = CommandResult("simulate", path)
    write_manifest(path, "simulate", cfg, {"resume": resume or ""})
    result.files.append(snapshots.save(path / "snapshot_initial.vtrc", snapshots.Snapshot.from_state(state)))
    if cfg.T == 0:
        return result
    try:
        record = simulate_state(state, cfg.T, cfg.observables, every=cfg.every)
    except BlowUpError as exc:
        if exc.partial is not None:
            write_record_csv(path / "timeseries.csv", exc.partial)
        raise
    result.files.append(write_record_csv(path / "timeseries.csv", record))
    result.files.append(snapshots.save(path / "snapshot_final.vtrc", snapshots.Snapshot.from_state(record.final)))
    result.summary = {"t_final": record.final.t, "status": record.status,
                      **{name: float(record.series(name)[-1]) for name in record.observables}}
    return result


def run_tracer(cfg: RunConfig, out: Optional[str] = None, resume: Optional[str] = None,
               progress: bool = False) -> CommandResult:
    path = _prepare(cfg, out)
    write_manifest(path, "tracer", cfg)
    rng = RngState(cfg.seed)
    w0 = cfg.initial_field()
    noise = cfg.noise_spec()
    run = run_eulerian_tracer(w0, noise, cfg.dt, cfg.T, cfg.tracer.x0, rng=rng, every=cfg.every,
                              options=cfg.options(), rough_start=cfg.tracer.rough_start)
    rec, tr = run.record, run.tracer
    header = ["t", "x1", "x2", "wrapped1", "wrapped2"] + list(rec.observables)
    rows = []
    for i, t in enumerate(rec.times):
        rows.append([t, *tr.lift[i], *tr.wrapped[i], *(rec.observables[k][i] for k in rec.observables)])
    result = CommandResult("tracer", path)
    result.files.append(write_csv(path / "tracer.csv", header, rows))
    result.summary = {"x_final": tr.final.tolist(), "displacement": tr.displacement().tolist()}
    if cfg.tracer.round_trip and cfg.T > 0 and cfg.every == 1:
        report = round_trip_check(w0, noise, cfg.dt, cfg.T, cfg.tracer.x0, rng=rng, options=cfg.options())
        result.summary["round_trip"] = {"dt": list(report.dts), "error": list(report.errors), "ratio": report.ratio}
    result.files.append(write_json(path / "summary.json", result.summary))
    return result


def _ensemble_job(args):
    member, cfg, noise, T = args
    state = SolverState(EquationKind.LAGRANGIAN, member.w0, cfg.dt, member.rng.copy(), noise, options=cfg.options())
    steps = int(round(T / cfg.dt))
    record = simulate_state(state, T, ("energy", "disp1", "disp2"), every=max(1, steps), keep_fields=True)
    disp = np.array([record.series("disp1")[-1], record.series("disp2")[-1]])
    return member, disp, record


def run_ensemble(cfg: RunConfig, out: Optional[str] = None, resume: Optional[str] = None,
                 progress: bool = False) -> CommandResult:
    path = _prepare(cfg, out)
    write_manifest(path, "ensemble", cfg)
    noise = cfg.noise_spec()
    T = cfg.ensemble.T
    w0 = cfg.initial_field()
    members = ensemble_members(cfg, cfg.ensemble.size, w0)
    threads = cfg.worker_count
    results = run_parallel(_ensemble_job, [(m, cfg, noise, T) for m in members], threads, "trajectories", progress)
    logger.info("ensemble: %d trajectories to T=%g", len(results), T)

    rows = [[m.index, m.rng.stream, m.rng.antithetic, *m.x0, *d] for m, d, _ in results]
    files = [write_csv(path / "ensemble.csv", ["index", "stream", "antithetic", "x0_1", "x0_2", "disp1", "disp2"], rows)]

    # a reflected member is an exact negative of its partner, so only one member per pair is a sample
    independent = [r for r in results if not r[0].rng.antithetic]
    if len(independent) < len(results):
        logger.info("antithetic pairs: statistics use %d of %d trajectories", len(independent), len(results))
    x0s = np.array([m.x0 for m, _, _ in independent])
    disps = np.array([d for _, d, _ in independent])
    if len(independent) < 2:
        raise ConfigError([("ensemble.size", "variance estimates need at least two independent trajectories")],
                          cfg.source)
    paths = paths_from_displacements(x0s, disps, T)
    drift = stokes_drift(paths, T)
    v = np.zeros(2) if cfg.statistics.v_mode == "zero" else drift.value
    extra = {"members": len(results),
             "rms_drift": float(np.sqrt(np.mean(np.sum((disps / T) ** 2, axis=1))))}
    direct = asymptotic_variance_direct(paths, v, T, n_boot=cfg.statistics.bootstrap, level=cfg.statistics.level,
                                        seed=cfg.seed)

    clt = None
    if len(paths) >= CLT_MIN_SIZE:
        z = (disps - v * T) / np.sqrt(T)
        clt = clt_diagnostics(z, direct.matrix, alpha=cfg.ensemble.alpha, allow_singular=True)
    else:
        logger.info("CLT diagnostics skipped: %d < %d trajectories", len(paths), CLT_MIN_SIZE)

    if not cfg.nonlinear:
        oracle = linear_ou_diffusivity(noise, cfg.convention)
        extra["D_linear_oracle"] = oracle.tolist()
        parts = [martingale_parts(rec, lambda w: linear_corrector(w, None, cfg.convention), v, T)
                 for _, _, rec in independent]
        extra["mean_abs_R"] = np.mean([np.abs(p.R) for p in parts], axis=0).tolist()

    gk = None
    if cfg.ensemble.green_kubo:
        gk = _green_kubo(cfg, noise, w0, v, None if cfg.statistics.v_mode == "zero" else drift.se, threads, progress)

    summary = EnsembleSummary(len(paths), T, drift, direct, gk, clt, extra=extra)
    result = CommandResult("ensemble", path, summary.to_dict(), files)
    files.append(write_json(path / "summary.json", result.summary))
    flat = _flatten(result.summary)
    files.append(write_csv(path / "summary.csv", ["key", "value"], sorted(flat.items())))
    return result


def _green_kubo(cfg: RunConfig, noise: NoiseSpec, w0: SpectralField, v, v_se, threads: int, progress: bool):
    st = cfg.statistics
    samples = stationary_samples(w0, noise, cfg.dt, cfg.ensemble.stationary_samples, burn_in=st.burn_in,
                                 thin=st.thin, rng=RngState(cfg.seed, STATIONARY_STREAM), options=cfg.options())
    correctors = _correctors(cfg, noise, samples.fields, v, threads, progress)
    return green_kubo_D(samples.fields, correctors, v, v_se, level=st.level)


def _correctors(cfg: RunConfig, noise: NoiseSpec, fields: Sequence[SpectralField], v, threads: int, progress: bool):
    c = cfg.corrector
    if c.method == "linear_exact":
        v = np.asarray(v, dtype=float)
        return [replace(exact_linear_estimate(w, c.t, cfg.convention), v=v) for w in fields]
    out = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for j, w in enumerate(tqdm(fields, desc="correctors", disable=not progress, leave=False)):
            rng = RngState(cfg.seed, CORRECTOR_STREAM + j * c.inner)
            out.append(corrector(w, c.t, c.inner, noise=noise, dt=cfg.dt, v=v, rng=rng, options=cfg.options(),
                                 map_fn=pool.map))
    return out


def run_corrector(cfg: RunConfig, out: Optional[str] = None, resume: Optional[str] = None,
                  progress: bool = False) -> CommandResult:
    path = _prepare(cfg, out)
    write_manifest(path, "corrector", cfg)
    noise = cfg.noise_spec()
    sources = list(cfg.corrector.snapshots) or ["<initial>"]
    fields = [cfg.initial_field() if s == "<initial>" else truncate(snapshots.load(s).field, cfg.cutoff)
              for s in sources]
    v = np.zeros(2)
    summary = {}
    if cfg.statistics.v_mode == "estimate":
        st = cfg.statistics
        samples = stationary_samples(cfg.initial_field(), noise, cfg.dt, cfg.ensemble.stationary_samples,
                                     burn_in=st.burn_in, thin=st.thin, rng=RngState(cfg.seed, STATIONARY_STREAM),
                                     options=cfg.options())
        drift = ergodic_drift(samples.fields)
        v = drift.value
        summary = {"v_hat": v.tolist(), "v_se": drift.se.tolist()}
        logger.info("corrector centered on v=(%.3g, %.3g) from %d stationary samples", *v, drift.size)
    estimates = _correctors(cfg, noise, fields, v, cfg.worker_count, progress)
    header = ["source", "t", "inner", "chi1", "chi2", "se1", "se2", "tail", "v1", "v2"]
    if not cfg.nonlinear:
        header += ["chi1_linear", "chi2_linear"]
    rows = []
    for src, est in zip(sources, estimates):
        row = [src, est.t, est.inner, *est.value, *est.se, est.tail, *v]
        if not cfg.nonlinear:
            row += list(linear_corrector(est.w, est.t, cfg.convention))
        rows.append(row)
    result = CommandResult("corrector", path, {"count": len(rows), **summary})
    result.files.append(write_csv(path / "corrector.csv", header, rows))
    return result


def _coupling_job(args):
    i, cfg, noise, w0 = args
    xi = random_field(cfg.cutoff, np.random.default_rng([cfg.coupling.xi_seed, i]), cfg.coupling.xi_slope,
                      cfg.coupling.xi_norm)
    steps = int(round(cfg.coupling.T / cfg.dt))
    every = max(1, int(round(0.05 / cfg.dt))) if steps > 0 else 1
    return run_coupled(w0, xi, noise, cfg.dt, cfg.coupling.T, cfg.n0, rng=RngState(cfg.seed, i), every=every,
                       options=cfg.options())


def run_coupling(cfg: RunConfig, out: Optional[str] = None, resume: Optional[str] = None,
                 progress: bool = False) -> CommandResult:
    path = _prepare(cfg, out)
    write_manifest(path, "coupling", cfg, {"n0": cfg.n0})
    noise = cfg.noise_spec()
    w0 = cfg.initial_field()
    jobs = [(i, cfg, noise, w0) for i in range(cfg.coupling.size)]
    records = run_parallel(_coupling_job, jobs, cfg.worker_count, "coupled runs", progress)
    report = coupling_report(records)
    header = ["t", "mean_zeta_norm2", "mean_control_energy"]
    rows = list(zip(report.times, report.mean_zeta_norm2, report.mean_control_energy))
    result = CommandResult("coupling", path, report.as_dict())
    result.files.append(write_csv(path / "coupling.csv", header, rows))
    result.files.append(write_json(path / "summary.json", result.summary))
    if report.max_relative_identity_error > cfg.coupling.tolerance:
        raise InvariantError("xi - D - zeta exceeds tolerance", float(report.times[-1]),
                             report.max_relative_identity_error)
    if cfg.coupling.T >= 2.0 and not report.extinct:
        raise InvariantError("low modes of zeta did not vanish by t = 2", 2.0, report.max_low_radius)
    return result


def run_diagnose(cfg: RunConfig, out: Optional[str] = None, resume: Optional[str] = None,
                 progress: bool = False) -> CommandResult:
    path = _prepare(cfg, out)
    write_manifest(path, "diagnose", cfg)
    noise = cfg.noise_spec()
    T = cfg.diagnose.T or cfg.T
    state = _start_state(cfg, resume)
    names = ("energy", "enstrophy", "dissipation", "cum_dissipation", "psi1", "psi2")
    record = simulate_state(state, T, names, every=cfg.every)
    report = moment_monitors(record, noise, nu=cfg.diagnose.nu or None, burn_in=cfg.diagnose.burn_in)
    result = CommandResult("diagnose", path, {"monitors": report.as_dict()})
    result.files.append(write_record_csv(path / "diagnose.csv", record))

    if cfg.diagnose.ensemble >= 2:
        w0 = state.field
        members = ensemble_members(replace(cfg, ensemble=replace(cfg.ensemble, antithetic=False)),
                                   cfg.diagnose.ensemble, w0)

        def job(m):
            s = SolverState(cfg.kind, m.w0, cfg.dt, m.rng.copy(), noise, options=cfg.options())
            return simulate_state(s, T, ("energy", "cum_dissipation"), every=max(1, int(round(T / cfg.dt))))

        records = run_parallel(job, members, cfg.worker_count, "energy identity", progress)
        ident = energy_identity_check(records, w0.norm() ** 2, noise, T)
        result.summary["energy_identity"] = {"lhs": ident.lhs, "rhs": ident.rhs, "se": ident.se,
                                             "passed": ident.passed}
    result.files.append(write_json(path / "summary.json", result.summary))
    return result


COMMANDS: Dict[str, Callable[..., CommandResult]] = {
    "simulate": run_simulate,
    "tracer": run_tracer,
    "ensemble": run_ensemble,
    "corrector": run_corrector,
    "coupling": run_coupling,
    "diagnose": run_diagnose,
}

RESUMABLE = frozenset({"simulate", "diagnose"})


def run_command(command: str, cfg: RunConfig, out: Optional[str] = None, resume: Optional[str] = None,
                progress: bool = False) -> CommandResult:
    if command not in COMMANDS:
        raise ConfigError([("command", f"unknown subcommand {command!r}")])
    if resume and command not in RESUMABLE:
        raise ConfigError([("--resume", f"{command} starts from the configured initial field and cannot resume")])
    logger.info("%s: N=%d dt=%g seed=%d -> %s", command, cfg.cutoff, cfg.dt, cfg.seed, out or cfg.output_dir)
    return COMMANDS[command](cfg, out, resume, progress)


def _flatten(data, prefix: str = "") -> Dict[str, str]:
    out: Dict[str, str] = {}
    if isinstance(data, dict):
        for k, v in data.items():
            out.update(_flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(data, (list, tuple)):
        for i, v in enumerate(data):
            out.update(_flatten(v, f"{prefix}[{i}]"))
    else:
        out[prefix] = _fmt(data) if data is not None else ""
    return out
