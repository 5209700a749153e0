"""Experiment configuration, replication orchestration, figure sweeps and CSV output."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

from .contention import ContentionConfig
from .kernel import MS, S, US, SimulationFault, parse_duration
from .medium import PhyConfig
from .metrics import MetricSeries, ClassStats
from .network import PROTOCOLS, RunConfig, simulate
from .traffic import MAX_PAYLOAD, GeneratorSpec, Priority

SEED_ENV = "MACSIM_SEED"
NODE_RANGE = (2, 11)
FRAGMENT_RANGE = (2, MAX_PAYLOAD)
FIGURE_FRAGMENTS = {"a": 16, "b": 2}

CSV_COLUMNS = (
    "protocol", "node_count", "fragment_payload", "priority", "mean_delay_ms", "delay_ci_ms",
    "throughput_Bps", "throughput_ci_Bps", "delivered", "dropped", "collisions",
)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key or line."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep point; every default is the reference parameter set."""

    protocol: str = "frog"
    node_count: int = 11
    fragment_payload: int = 16
    duration: int = 1000 * S
    replications: int = 5
    master_seed: int = 42
    urgent_law: str = "poisson"
    urgent_interval: int = 2 * S
    normal_law: str = "cbr"
    normal_interval: int = 200 * MS
    payload_len: int = MAX_PAYLOAD
    queue_capacity: int = 50
    t_int: int = 600 * US
    slot_time: int = 320 * US
    per_byte_time: int = 32 * US
    max_retries: int = 5
    warmup: int = 0
    bop_rts_cts: bool = False
    output: str | None = None

    def __post_init__(self) -> None:
        lo, hi = NODE_RANGE
        checks = [
            (self.protocol in PROTOCOLS, "protocol", f"must be one of {', '.join(PROTOCOLS)}"),
            (lo <= self.node_count <= hi, "node_count", f"must be in {lo}..{hi}"),
            (FRAGMENT_RANGE[0] <= self.fragment_payload <= FRAGMENT_RANGE[1], "fragment_payload",
             f"must be in {FRAGMENT_RANGE[0]}..{FRAGMENT_RANGE[1]} bytes"),
            (self.duration > 0, "duration", "must be positive"),
            (self.replications >= 1, "replications", "must be >= 1"),
            (self.master_seed >= 0, "master_seed", "must be >= 0"),
            (self.urgent_law in ("poisson", "cbr"), "urgent_law", "must be poisson or cbr"),
            (self.normal_law in ("poisson", "cbr"), "normal_law", "must be poisson or cbr"),
            (self.urgent_interval > 0, "urgent_interval", "must be positive"),
            (self.normal_interval > 0, "normal_interval", "must be positive"),
            (1 <= self.payload_len <= MAX_PAYLOAD, "payload_len", f"must be in 1..{MAX_PAYLOAD}"),
            (self.queue_capacity >= 1, "queue_capacity", "must be >= 1"),
            (self.t_int > 0, "t_int", "must be positive"),
            (self.slot_time > 0, "slot_time", "must be positive"),
            (self.per_byte_time > 0, "per_byte_time", "must be positive"),
            (self.max_retries >= 0, "max_retries", "must be >= 0"),
            (0 <= self.warmup < self.duration, "warmup", "must be >= 0 and shorter than duration"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"{key} = {getattr(self, key)!r}: {msg}")
        try:
            self.run_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def run_config(self) -> RunConfig:
        gens = (GeneratorSpec(Priority.URGENT, self.urgent_law, self.urgent_interval),
                GeneratorSpec(Priority.NORMAL, self.normal_law, self.normal_interval))
        return RunConfig(
            protocol=self.protocol,
            node_count=self.node_count,
            fragment_payload=self.fragment_payload,
            duration=self.duration,
            phy=PhyConfig(per_byte_time=self.per_byte_time),
            contention=ContentionConfig(slot_time=self.slot_time, max_retries=self.max_retries),
            t_int=self.t_int,
            payload_len=self.payload_len,
            queue_capacity=self.queue_capacity,
            generators=gens,
            warmup=self.warmup,
            bop_rts_cts=self.bop_rts_cts,
        )

    def seeds(self) -> list[int]:
        return [self.master_seed + r for r in range(self.replications)]


_DURATION_KEYS = {"duration", "urgent_interval", "normal_interval", "t_int", "slot_time",
                  "per_byte_time", "warmup"}
_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def coerce_value(key: str, raw: str):
    """Convert the text of one config value to the field's type."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown key {key!r}")
    raw = raw.strip()
    if key in _DURATION_KEYS:
        try:
            return parse_duration(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    kind = _FIELD_TYPES[key]
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if key == "protocol":
        return raw.lower()
    return raw or None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) on top of ``base``."""
    values = {}
    seen_at = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key in seen_at:
            raise ConfigError(f"line {lineno}: {key!r} already set on line {seen_at[key]}")
        try:
            values[key] = coerce_value(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        seen_at[key] = lineno
    try:
        return replace(base or ExperimentConfig(), **values)
    except ConfigError as exc:
        key = str(exc).split(" ", 1)[0]
        where = f"line {seen_at[key]}: " if key in seen_at else ""
        raise ConfigError(f"{where}{exc}") from None


def apply_seed_env(cfg: ExperimentConfig, environ=os.environ) -> ExperimentConfig:
    raw = environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return cfg
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None
    return replace(cfg, master_seed=seed)


# -- running ------------------------------------------------------------------

@dataclass
class RunSummary:
    """What the harness keeps from one replication."""

    protocol: str
    node_count: int
    fragment_payload: int
    seed: int
    classes: list[ClassStats] = field(default_factory=list)
    measured: int = 0
    conservation_ok: bool = True
    overlap_violations: int = 0
    urgent_over_normal: int = 0
    aggregate_throughput: float = 0.0
    preemptions: int = 0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_one(cfg: ExperimentConfig, seed: int, pure: bool = False) -> RunSummary:
    """One replication; a simulation fault marks the run failed instead of raising."""
    summary = RunSummary(cfg.protocol, cfg.node_count, cfg.fragment_payload, seed)
    try:
        res = simulate(cfg.run_config(), seed, pure=pure)
    except SimulationFault as exc:
        summary.error = str(exc)
        return summary
    summary.classes = res.metrics.by_class
    summary.measured = res.measured
    summary.conservation_ok = res.conservation_ok()
    summary.overlap_violations = res.overlap_violations
    summary.urgent_over_normal = res.urgent_over_normal
    summary.aggregate_throughput = res.aggregate_throughput()
    summary.preemptions = res.preemptions
    return summary


def _run_star(job):
    return run_one(*job)


def run_many(jobs: list[tuple], workers: int = 1) -> list[RunSummary]:
    """Run ``(cfg, seed, pure)`` jobs; results come back in job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [run_one(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_star, jobs, chunksize=1))


@dataclass(frozen=True)
class ResultRow:
    protocol: str
    node_count: int
    fragment_payload: int | None  # None for bop, which does not fragment
    priority: str
    mean_delay_ms: float | None
    delay_ci_ms: float | None
    throughput_Bps: float
    throughput_ci_Bps: float | None
    delivered: int  # summed over replications
    dropped: int
    collisions: int


def aggregate(cfg: ExperimentConfig, runs: list[RunSummary]) -> list[ResultRow]:
    """One row per priority over the successful replications of ``cfg``."""
    good = [r for r in runs if not r.failed]
    if not good:
        return []
    rows = []
    frag = cfg.fragment_payload if cfg.protocol == "frog" else None
    for prio in (Priority.URGENT, Priority.NORMAL):
        series = MetricSeries((cfg.protocol, cfg.node_count, frag, prio))
        for r in good:
            series.add(r.classes[prio], r.measured)
        delay, delay_half = series.delay_ci()
        thr, thr_half = series.throughput_ci()
        rows.append(ResultRow(
            protocol=cfg.protocol,
            node_count=cfg.node_count,
            fragment_payload=frag,
            priority=prio.label,
            mean_delay_ms=None if delay is None else delay / MS,
            delay_ci_ms=None if delay_half is None else delay_half / MS,
            throughput_Bps=thr,
            throughput_ci_Bps=thr_half,
            delivered=sum(series.delivered),
            dropped=sum(series.dropped),
            collisions=sum(series.collisions),
        ))
    return rows


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[ResultRow]
    runs: list[RunSummary]

    @property
    def failures(self) -> list[RunSummary]:
        return [r for r in self.runs if r.failed]


def run_experiment(cfg: ExperimentConfig, workers: int = 1, pure: bool = False) -> ExperimentResult:
    """``cfg.replications`` runs seeded ``master_seed + r``, aggregated into rows."""
    runs = run_many([(cfg, seed, pure) for seed in cfg.seeds()], workers)
    return ExperimentResult(cfg, aggregate(cfg, runs), runs)


# -- CSV ----------------------------------------------------------------------

def _num(x: float | None, digits: int = 6) -> str:
    return "" if x is None else f"{x:.{digits}f}"


def format_row(row: ResultRow) -> str:
    cells = [
        row.protocol,
        str(row.node_count),
        "" if row.fragment_payload is None else str(row.fragment_payload),
        row.priority,
        _num(row.mean_delay_ms),
        _num(row.delay_ci_ms),
        _num(row.throughput_Bps),
        _num(row.throughput_ci_Bps),
        str(row.delivered),
        str(row.dropped),
        str(row.collisions),
    ]
    return ",".join(cells)


def to_csv(rows: Iterable[ResultRow]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(format_row(r) for r in rows)
    return "\n".join(lines) + "\n"


def write_csv(path, rows: Iterable[ResultRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_csv(rows))
    return path


def read_csv(path) -> list[dict[str, str]]:
    import csv

    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# -- figure sweep -------------------------------------------------------------

@dataclass
class SweepResult:
    files: dict[str, Path]
    rows: dict[str, list[ResultRow]]
    runs: list[RunSummary]
    base: ExperimentConfig

    @property
    def failures(self) -> list[RunSummary]:
        return [r for r in self.runs if r.failed]


def sweep_points(base: ExperimentConfig, node_counts=None, fragments=None) -> list[ExperimentConfig]:
    """BoP-MAC once per node count, FROG-MAC once per (node count, fragment size)."""
    node_counts = range(NODE_RANGE[0], NODE_RANGE[1] + 1) if node_counts is None else node_counts
    fragments = tuple(FIGURE_FRAGMENTS.values()) if fragments is None else fragments
    points = []
    for n in node_counts:
        points.append(replace(base, protocol="bop", node_count=n, fragment_payload=base.fragment_payload))
        for frag in fragments:
            points.append(replace(base, protocol="frog", node_count=n, fragment_payload=frag))
    return points


def sweep_figures(out_dir=".", base: ExperimentConfig | None = None, *, node_counts=None,
                  workers: int = 1, pure: bool = False) -> SweepResult:
    """Write fig4a/fig4b (delay) and fig5a/fig5b (throughput) CSVs.

    Suffix ``a`` pairs BoP-MAC with FROG-MAC at fragment size 16, ``b`` at 2.
    Delay and throughput files share one row schema, so each pair holds the
    same rows; BoP-MAC rows are computed once and shared by both suffixes.
    """
    base = base or ExperimentConfig()
    points = sweep_points(base, node_counts, tuple(FIGURE_FRAGMENTS.values()))
    jobs = [(cfg, seed, pure) for cfg in points for seed in cfg.seeds()]
    runs = run_many(jobs, workers)
    per_point: dict[tuple, list[ResultRow]] = {}
    k = 0
    for cfg in points:
        chunk = runs[k:k + cfg.replications]
        k += cfg.replications
        frag = cfg.fragment_payload if cfg.protocol == "frog" else None
        per_point[(cfg.protocol, cfg.node_count, frag)] = aggregate(cfg, chunk)

    counts = sorted({cfg.node_count for cfg in points})
    out = Path(out_dir)
    files, rows = {}, {}
    for suffix, frag in FIGURE_FRAGMENTS.items():
        table = []
        for n in counts:
            table.extend(per_point[("bop", n, None)])
            table.extend(per_point[("frog", n, frag)])
        for fig in ("fig4", "fig5"):
            name = fig + suffix
            rows[name] = table
            files[name] = write_csv(out / f"{name}.csv", table)
    return SweepResult(files, rows, runs, base)


# -- self-check ---------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str


def run_checks(runs: Iterable[RunSummary], capacity_Bps: float | None = None) -> list[Check]:
    """Per-run invariants: conservation, disjoint delivered airtime, capacity,
    and no urgent frame starting over a normal BoP-MAC data frame."""
    runs = list(runs)
    checks = []
    bad = [r for r in runs if r.failed]
    checks.append(Check("no runtime faults", not bad, f"{len(bad)} failed run(s)"))
    good = [r for r in runs if not r.failed]
    bad = [r for r in good if not r.conservation_ok]
    checks.append(Check("conservation", not bad, f"{len(bad)} of {len(good)} runs violate it"))
    bad = [r for r in good if r.overlap_violations]
    checks.append(Check("disjoint delivered airtime", not bad, f"{len(bad)} runs overlap"))
    if capacity_Bps is None:
        capacity_Bps = S / PhyConfig().per_byte_time
    worst = max((r.aggregate_throughput for r in good), default=0.0)
    checks.append(Check("throughput within capacity", worst <= capacity_Bps,
                        f"max {worst:.1f} B/s vs {capacity_Bps:.1f} B/s"))
    bop = [r for r in good if r.protocol == "bop"]
    hits = sum(r.urgent_over_normal for r in bop)
    checks.append(Check("bop never preempts normal data", hits == 0, f"{hits} urgent start(s) over normal data"))
    return checks


def trend_checks(rows: dict[str, list[ResultRow]]) -> list[Check]:
    """The expected qualitative relations between protocols on a full sweep."""
    def index(table):
        return {(r.protocol, r.node_count, r.priority): r for r in table}

    a, b = index(rows["fig4a"]), index(rows["fig4b"])
    counts = sorted({n for (_, n, _) in a})
    lo, hi = counts[0], counts[-1]
    checks = []

    def delay(t, proto, n, prio):
        d = t[(proto, n, prio)].mean_delay_ms
        return float("inf") if d is None else d

    losers = [f"n={n},frag={FIGURE_FRAGMENTS[s]}" for s, t in (("a", a), ("b", b)) for n in counts
              if not delay(t, "frog", n, "urgent") < delay(t, "bop", n, "urgent")]
    checks.append(Check("frog urgent delay below bop", not losers, "fails at " + "; ".join(losers) if losers else "all points"))
    ok = all(delay(t, "frog", hi, "normal") > delay(t, "bop", hi, "normal") for t in (a, b))
    checks.append(Check("frog normal delay above bop", ok, f"n={hi}"))
    fa, fb = ("frog", hi, "urgent"), ("frog", hi, "normal")
    ok = (delay(b, *fa) < delay(a, *fa) and delay(b, *fb) > delay(a, *fb)
          and b[fa].throughput_Bps >= a[fa].throughput_Bps and b[fb].throughput_Bps < a[fb].throughput_Bps)
    checks.append(Check("smaller fragments trade normal for urgent", ok, f"n={hi}"))
    bad = []
    for name, t in (("a", a), ("b", b)):
        for proto in ("bop", "frog"):
            for prio in ("urgent", "normal"):
                if not delay(t, proto, hi, prio) > delay(t, proto, lo, prio):
                    bad.append(f"{proto}{name} {prio} delay")
            per_lo = t[(proto, lo, "normal")].throughput_Bps / (lo - 1)
            per_hi = t[(proto, hi, "normal")].throughput_Bps / (hi - 1)
            if not per_hi < per_lo:
                bad.append(f"{proto}{name} per-node normal throughput")
    checks.append(Check("load trends", not bad, "; ".join(bad) or f"n={lo} vs n={hi}"))
    return checks
