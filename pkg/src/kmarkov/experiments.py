"""Experiment configs, validation and the pipelines behind each subcommand."""
from __future__ import annotations

import dataclasses
import datetime as _dt
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .clifford import (LetterMode, LetterSpec, N_CLIFFORD, N_WEIGHT_CHANGING, gate_set,
                       mean_scrambling_time, scan_min_scrambling, scrambling_time)
from .markov import (KMarkovRule, Letter, RuleError, derive_seed, effective_order, generate,
                     rule_from_dict, run_lengths, stationary_letter_frequency)
from .output import write_csv, write_matrix_csv, write_pgm, write_sidecar, sha256
from .parallel import default_threads
from .pswap import DEFAULT_THETA, UniformRunLengths, run_scenario
from .stats import DEFAULT_REALIZATIONS, DEFAULT_WINDOW, correlation_difference, correlation_map
from .walk import fit_from_ensembles, mean_cover_time

log = logging.getLogger(__name__)

EXPERIMENTS = ("gateset", "cover", "scramble", "pswap", "correlate")
MANIFEST = "manifest.json"
RUNLENGTH_SAMPLE = 100_000


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" or "warning"
    field: str
    message: str

    def __str__(self):
        return f"{self.severity.upper()} [{self.field}] {self.message}"


@dataclass
class ExperimentConfig:
    experiment: str
    rules: list = field(default_factory=list)
    N: int | None = None
    sizes: list | None = None
    trials: int = 500
    realizations: int = DEFAULT_REALIZATIONS
    seed: int = 0
    theta: float = DEFAULT_THETA
    layers: int | None = None
    max_steps: int | None = None
    letter_spec: dict = field(default_factory=dict)
    source: str = "pswap"
    baseline: dict | None = None
    scan: dict | None = None
    window: int = DEFAULT_WINDOW
    dt_max: int = 50
    dx_max: int | None = None
    run_to_end: bool = False
    out: str = "out"
    threads: int | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        doc = dict(doc)
        if "rule" in doc:
            doc.setdefault("rules", []).insert(0, doc.pop("rule"))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        if "experiment" not in doc:
            raise ConfigError("missing required field 'experiment'")
        return cls(**doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def ring_sizes(self) -> list[int]:
        if self.sizes:
            return [int(n) for n in self.sizes]
        return [int(self.N)] if self.N is not None else []

    def named_rules(self) -> list[tuple[str, object]]:
        return [(_rule_id(doc, i), parse_source(doc)) for i, doc in enumerate(self.rules)]

    def spec(self) -> LetterSpec:
        d = self.letter_spec
        return LetterSpec(LetterMode(d.get("mode", "double")),
                          Letter[d.get("swap_letter", "A")], bool(d.get("pin_b", False)))


def _rule_id(doc: dict, i: int) -> str:
    return str(doc.get("id", f"rule{i}"))


def parse_source(doc: dict):
    """A KMarkovRule, or a run-length sampler for PSWAP schedules."""
    doc = {k: v for k, v in doc.items() if k != "id"}
    if doc.get("sampler") == "uniform":
        return UniformRunLengths(int(doc.get("low", 1)), int(doc.get("high", 159)))
    if "sampler" in doc:
        raise RuleError(f"unknown sampler {doc['sampler']!r}")
    return rule_from_dict(doc)


# --- validation --------------------------------------------------------------

def validate(config) -> list[Finding]:
    """Dry check of a config (dict or ExperimentConfig); nothing is run."""
    findings: list[Finding] = []

    def err(fld, msg):
        findings.append(Finding("error", fld, msg))

    if isinstance(config, ExperimentConfig):
        cfg = config
    else:
        if not config:
            return [Finding("error", "config", "empty config")]
        try:
            cfg = ExperimentConfig.from_dict(config)
        except (ConfigError, TypeError) as exc:
            return [Finding("error", "config", str(exc))]

    if cfg.experiment not in EXPERIMENTS:
        err("experiment", f"unknown experiment {cfg.experiment!r}; expected one of {EXPERIMENTS}")
        return findings

    needs_rule = cfg.experiment in ("cover", "scramble", "pswap", "correlate")
    if needs_rule and not cfg.rules and not (cfg.experiment == "scramble" and cfg.scan):
        err("rules", "at least one rule is required")
    for i, doc in enumerate(cfg.rules):
        fld = f"rules[{i}]"
        try:
            src = parse_source(doc)
        except (RuleError, TypeError, ValueError) as exc:
            err(fld, str(exc))
            continue
        if isinstance(src, UniformRunLengths):
            if cfg.experiment != "pswap" and not (cfg.experiment == "correlate"
                                                  and cfg.source == "pswap"):
                err(fld, "run-length samplers only drive PSWAP schedules")
            if not 1 <= src.low <= src.high:
                err(fld, f"sampler needs 1 <= low <= high, got [{src.low}, {src.high}]")
            continue
        order = effective_order(src)
        if order < src.k:
            findings.append(Finding(
                "warning", fld,
                f"declared k={src.k} but the rule has effective order {order}; "
                f"lower-order rules are excluded from order-k results"))
    if cfg.baseline is not None:
        try:
            parse_source(cfg.baseline)
        except (RuleError, TypeError, ValueError) as exc:
            err("baseline", str(exc))

    sizes = cfg.ring_sizes()
    if needs_rule and not sizes:
        err("N", "ring size N (or sizes) is required")
    pswap_run = cfg.experiment == "pswap" or (cfg.experiment == "correlate"
                                              and cfg.source == "pswap")
    min_n = 4 if pswap_run else 2
    for n in sizes:
        if not isinstance(n, int) or n % 2 or n < min_n:
            err("N", f"ring size must be an even integer >= {min_n}, got {n}")
    for name in ("trials", "realizations", "layers", "max_steps", "window"):
        v = getattr(cfg, name)
        if v is not None and (not isinstance(v, int) or v < 1):
            err(name, f"must be a positive integer, got {v!r}")
    if cfg.threads is not None and (not isinstance(cfg.threads, int) or cfg.threads < 1):
        err("threads", f"must be a positive integer, got {cfg.threads!r}")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        err("seed", f"must be a non-negative integer, got {cfg.seed!r}")
    if not (isinstance(cfg.theta, (int, float)) and math.isfinite(cfg.theta)):
        err("theta", f"must be a finite angle, got {cfg.theta!r}")
    if cfg.dt_max < 0:
        err("dt_max", "must be >= 0")
    try:
        cfg.spec()
    except (KeyError, ValueError) as exc:
        err("letter_spec", f"invalid letter spec: {exc}")
    if cfg.experiment == "correlate" and cfg.source not in ("pswap", "scramble"):
        err("source", f"correlate source must be 'pswap' or 'scramble', got {cfg.source!r}")
    if cfg.scan is not None:
        for key in ("k", "f_A"):
            if key not in cfg.scan:
                err(f"scan.{key}", "missing")
    return findings


# --- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class RunManifest:
    config: dict
    version: str
    started: str
    wall_clock_s: float
    outputs: dict

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / MANIFEST
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")
        tmp.replace(path)
        return path


def run(config) -> RunManifest:
    """Validate, dispatch to the experiment pipeline, then write the manifest."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    errors = [f for f in validate(cfg) if f.severity == "error"]
    if errors:
        raise ConfigError("; ".join(map(str, errors)))
    for f in validate(cfg):
        log.warning("%s", f)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST).unlink(missing_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    paths = PIPELINES[cfg.experiment](cfg, out)
    manifest = RunManifest(cfg.to_dict(), __version__, started,
                           round(time.perf_counter() - t0, 3),
                           {p.relative_to(out).as_posix(): sha256(p) for p in sorted(paths)})
    manifest.write(out)
    return manifest


def _threads(cfg: ExperimentConfig) -> int:
    return default_threads() if cfg.threads is None else cfg.threads


def _rule_columns(rule) -> tuple[int | None, str]:
    if isinstance(rule, KMarkovRule):
        return rule.k, " ".join(repr(p) for p in rule.table)
    return None, f"uniform[{rule.low},{rule.high}]"


def _f_a(rule) -> float | None:
    try:
        return stationary_letter_frequency(rule)
    except RuleError:
        return None


def _runlength_csv(out: Path, rid: str, rule: KMarkovRule, seed: int) -> Path:
    stats = run_lengths(generate(rule, RUNLENGTH_SAMPLE, seed))
    return write_csv(out / f"runlengths_{rid}.csv", ["length", "count_A", "count_B"], stats.rows())


# --- pipelines ---------------------------------------------------------------

def run_gateset(cfg: ExperimentConfig, out: Path) -> list[Path]:
    gs = gate_set()
    n_all, n_wc = len(gs.all_gates), len(gs.wc_subset)
    if (n_all, n_wc) != (N_CLIFFORD, N_WEIGHT_CHANGING):
        raise RuntimeError(f"gate counts {n_all}/{n_wc} differ from {N_CLIFFORD}/{N_WEIGHT_CHANGING}")
    counts = write_csv(out / "gate_counts.csv", ["set", "count"],
                       [("clifford_2q", n_all), ("weight_changing", n_wc),
                        ("weight_preserving", n_all - n_wc)])
    tables = write_csv(out / "wc_tables.csv",
                       ["index", "img_XI", "img_ZI", "img_IX", "img_IZ"] +
                       [f"t{p}" for p in range(16)],
                       [(i, *g.images, *g.table) for i, g in enumerate(gs.wc_subset)])
    return [counts, tables]


def run_cover(cfg: ExperimentConfig, out: Path) -> list[Path]:
    paths, summary = [], []
    for rid, rule in cfg.named_rules():
        ensembles = []
        for n in cfg.ring_sizes():
            ens = mean_cover_time(rule, n, cfg.trials, derive_seed(cfg.seed, n),
                                  cfg.max_steps, _threads(cfg))
            ensembles.append(ens)
            paths.append(write_csv(
                out / f"cover_{rid}_N{n}.csv", ["trial", "seed", "cover_time"],
                [(i, r.seed, -1 if r.timed_out else r.cover_time)
                 for i, r in enumerate(ens.results)]))
        D = None
        if len(ensembles) >= 3:
            try:
                D = fit_from_ensembles(ensembles).D
            except ValueError as exc:
                log.warning("diffusion fit for %s failed: %s", rid, exc)
        for ens in ensembles:
            summary.append((rid, ens.n_sites, ens.mean, ens.std,
                            ens.completion_fraction, D))
        paths.append(_runlength_csv(out, rid, rule, derive_seed(cfg.seed, 10**6)))
    paths.append(write_csv(out / "summary.csv",
                           ["rule_id", "N", "mean", "std", "completion_fraction", "D_if_fitted"],
                           summary))
    return paths


def run_scramble(cfg: ExperimentConfig, out: Path) -> list[Path]:
    spec, paths = cfg.spec(), []
    n = cfg.ring_sizes()[0] if cfg.ring_sizes() else None
    rows = []
    for i, (rid, rule) in enumerate(cfg.named_rules()):
        master = derive_seed(cfg.seed, i)
        ens = mean_scrambling_time(rule, spec, n, cfg.trials, master, cfg.layers, _threads(cfg))
        k, table = _rule_columns(rule)
        rows.append((rid, _f_a(rule), k, table, ens.mean, ens.std, cfg.trials,
                     ens.timeout_fraction))
        traj = scrambling_time(rule, spec, n, derive_seed(master, 0), cfg.layers,
                               run_to_end=cfg.run_to_end)
        occ = traj.occupation.values
        paths.append(write_matrix_csv(out / f"occupation_{rid}.csv", occ))
        paths.append(write_pgm(out / f"occupation_{rid}.pgm", occ, 0, 1))
    if rows:
        paths.append(write_csv(out / "scramble.csv",
                               ["rule_id", "f_A", "k", "table", "mean_t_scr", "std", "trials",
                                "timeout_fraction"], rows))
    if cfg.scan:
        paths.append(_run_scan(cfg, spec, n, out))
    return paths


def _run_scan(cfg: ExperimentConfig, spec: LetterSpec, n: int, out: Path) -> Path:
    k = int(cfg.scan["k"])
    fas = cfg.scan["f_A"]
    fas = fas if isinstance(fas, list) else [fas]
    res = int(cfg.scan.get("grid_resolution", 5))
    rows = []
    for j, f_a in enumerate(fas):
        scan = scan_min_scrambling(k, float(f_a), spec, n, res, cfg.trials,
                                   derive_seed(cfg.seed, 1000 + j), cfg.layers, _threads(cfg))
        for rule, ens in scan.entries:
            rows.append((f_a, rule.k, " ".join(repr(p) for p in rule.table), ens.mean,
                         ens.std, cfg.trials, ens.timeout_fraction, rule == scan.best_rule))
    return write_csv(out / "scan.csv", ["f_A", "k", "table", "mean_t_scr", "std", "trials",
                                        "timeout_fraction", "best"], rows)


def _pswap_layers(cfg: ExperimentConfig) -> int:
    return cfg.layers if cfg.layers is not None else 3000


def run_pswap(cfg: ExperimentConfig, out: Path) -> list[Path]:
    n, paths, summary = cfg.ring_sizes()[0], [], []
    for i, (rid, source) in enumerate(cfg.named_rules()):
        results = []
        for r in range(cfg.realizations):
            res = run_scenario(source, n, cfg.theta, _pswap_layers(cfg),
                               derive_seed(derive_seed(cfg.seed, i), r))
            results.append(res)
            tag = f"{rid}_r{r}"
            paths.append(write_csv(out / f"trajectory_{tag}.csv",
                                   ["compressed_step", "w_ave", "w_dw"],
                                   zip(range(len(res.w_ave)), res.w_ave, res.w_dw)))
            paths.append(write_csv(out / f"schedule_{tag}.csv", ["R_A", "R_B"],
                                   res.schedule.pairs.tolist()))
            occ = res.occupation.values
            paths.append(write_matrix_csv(out / f"occupation_{tag}.csv", occ))
            paths.append(write_pgm(out / f"occupation_{tag}.pgm", occ))
            late = None
            if res.equilibration_time is not None:
                late = float(np.mean(res.w_ave[2 * res.equilibration_time:]) / n) \
                    if 2 * res.equilibration_time < len(res.w_ave) else None
            summary.append((rid, r, res.equilibration_time, late, res.norm_drift))
        if isinstance(source, KMarkovRule):
            paths.append(_runlength_csv(out, rid, source, derive_seed(cfg.seed, 10**6 + i)))
        cmap = _late_correlation(cfg, [res.occupation for res in results],
                                 [res.equilibration_time for res in results])
        if cmap is not None:
            paths += _write_correlation(out, f"corr_{rid}", cmap)
    paths.append(write_csv(out / "pswap_summary.csv",
                           ["rule_id", "realization", "t_w", "late_w_over_N", "norm_drift"],
                           summary))
    return paths


def _late_correlation(cfg: ExperimentConfig, fields, events, strict: bool = False):
    """Pooled correlation map after twice the slowest event time, if there is room."""
    if any(t is None for t in events):
        if strict:
            raise RuntimeError("a realization never reached the threshold; no late window")
        return None
    t_min = 2 * max(events)
    span = min(f.n_layers for f in fields)
    window = min(cfg.window, span - t_min - cfg.dt_max)
    if window < 1:
        if strict:
            raise RuntimeError(f"layer budget too short for a late window after t={t_min}")
        return None
    if window < cfg.window:
        log.warning("late window truncated to %d layers", window)
    return correlation_map(fields, t_min, window, cfg.dx_max, cfg.dt_max)


def _write_correlation(out: Path, stem: str, cmap) -> list[Path]:
    csv_path = write_csv(out / f"{stem}.csv", ["dt", "dx", "C"], cmap.rows())
    pgm = write_pgm(out / f"{stem}.pgm", cmap.C)
    meta = dict(cmap.metadata)
    meta.update(dt_max=cmap.dt_max, dx_max=cmap.dx_max, N=cmap.n_sites,
                C_min=float(cmap.C.min()), C_max=float(cmap.C.max()))
    side = write_sidecar(out / f"{stem}.txt", meta)
    return [csv_path, pgm, side]


def _fields_for(cfg: ExperimentConfig, source, offset: int):
    n = cfg.ring_sizes()[0]
    fields, events = [], []
    for r in range(cfg.realizations):
        seed = derive_seed(derive_seed(cfg.seed, offset), r)
        if cfg.source == "pswap":
            res = run_scenario(source, n, cfg.theta, _pswap_layers(cfg), seed)
            fields.append(res.occupation)
            events.append(res.equilibration_time)
        else:
            traj = scrambling_time(source, cfg.spec(), n, seed, cfg.layers, run_to_end=True)
            fields.append(traj.occupation)
            events.append(traj.scrambling_time)
    return fields, events


def run_correlate(cfg: ExperimentConfig, out: Path) -> list[Path]:
    paths, maps = [], {}
    named = cfg.named_rules()
    if cfg.baseline is not None:
        named.append((_rule_id(cfg.baseline, len(named)) if "id" in cfg.baseline
                      else "baseline", parse_source(cfg.baseline)))
    for i, (rid, source) in enumerate(named):
        fields, events = _fields_for(cfg, source, i)
        maps[rid] = _late_correlation(cfg, fields, events, strict=True)
        paths += _write_correlation(out, f"corr_{rid}", maps[rid])
    if cfg.baseline is not None:
        base_id = named[-1][0]
        for rid, _ in named[:-1]:
            diff = correlation_difference(maps[rid], maps[base_id])
            paths += _write_correlation(out, f"corrdiff_{rid}_minus_{base_id}", diff)
    return paths


PIPELINES = {
    "gateset": run_gateset,
    "cover": run_cover,
    "scramble": run_scramble,
    "pswap": run_pswap,
    "correlate": run_correlate,
}
