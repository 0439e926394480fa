"""Experiment runner: sweeps, latency metrics, mode comparison and CSV/JSON output."""
from __future__ import annotations

import csv
import io
import json
import math
import random
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .checker import Report, check_trace
from .migration import MODES, GroupConfig
from .simnet import (
    ClockConfig,
    Hold,
    NetConfig,
    ServerOptions,
    SimResult,
    TimerConfig,
    WorkloadConfig,
    run,
)
from .topology import TopologySpec, random_topology, ring_spec

CSV_COLUMNS = (
    "mode", "n", "delay_ms", "hb_hz", "stab_hz", "skew_ms", "put_rate", "seed",
    "mean_lat_ms", "p99_lat_ms", "msgs_total", "verdict",
)


class ExperimentError(RuntimeError):
    """A run produced a failing checker verdict."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def resolve_topology(ref: str | TopologySpec) -> TopologySpec:
    """``ring:N`` or a path to a YAML/JSON topology file."""
    if isinstance(ref, TopologySpec):
        return ref
    if ref.startswith("ring:"):
        return ring_spec(int(ref.split(":", 1)[1]))
    return TopologySpec.load(ref)


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str = "ring:10"
    mode: str = "full"
    hb_hz: float = 10
    stab_hz: float = 1000
    lst_hz: float = 1000
    delay_ms: int = 0
    skew_ms: float = 0
    put_rate: float = 100
    get_rate: float = 0
    duration_ms: int = 1000
    seeds: tuple[int, ...] = (0,)
    groups: tuple[tuple[int, ...], ...] | None = None
    client_delay_ms: int = 0
    jitter_ms: int = 0
    check: bool = True

    def __post_init__(self):
        mode = "full" if self.mode == "ours" else self.mode
        if mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES} or 'ours'")
        object.__setattr__(self, "mode", mode)
        for name in ("hb_hz", "stab_hz", "lst_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.delay_ms < 0 or self.skew_ms < 0:
            raise ValueError("delay and skew must be non-negative")
        object.__setattr__(self, "seeds", tuple(self.seeds))

    @property
    def spec(self) -> TopologySpec:
        return resolve_topology(self.topology)

    def label(self) -> str:
        return self.mode


@dataclass
class RunMetrics:
    mode: str
    n: int
    delay_ms: int
    hb_hz: float
    stab_hz: float
    skew_ms: float
    put_rate: float
    seed: int
    mean_lat_ms: float
    p99_lat_ms: float
    msgs_total: int
    verdict: str
    samples: int = 0
    per_server: dict = field(default_factory=dict)
    messages: dict = field(default_factory=dict)
    report: Report | None = field(default=None, repr=False)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "report"}
        out["per_server"] = {str(k): v for k, v in self.per_server.items()}
        if self.report is not None:
            out["checker"] = self.report.to_dict()
        return out


@dataclass
class MetricsReport:
    config: ExperimentConfig
    runs: list[RunMetrics]

    @property
    def ok(self) -> bool:
        return all(r.verdict == "PASS" for r in self.runs)

    @property
    def mean_latency(self) -> float:
        vals = [r.mean_lat_ms for r in self.runs if not math.isnan(r.mean_lat_ms)]
        return statistics.fmean(vals) if vals else math.nan

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        return {
            "config": cfg,
            "ok": self.ok,
            "mean_lat_ms": _round(self.mean_latency),
            "runs": [r.to_dict() for r in self.runs],
        }


def _round(x: float, nd: int = 4):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return round(x, nd)


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile; NaN for an empty sample."""
    if not values:
        return math.nan
    s = sorted(values)
    rank = max(1, math.ceil(q / 100 * len(s)))
    return float(s[rank - 1])


def simulate(cfg: ExperimentConfig, seed: int) -> SimResult:
    spec = cfg.spec
    groups = GroupConfig.for_mode(cfg.mode, spec, cfg.groups)
    return run(
        spec,
        groups,
        NetConfig(delay_ms=cfg.delay_ms, client_delay_ms=cfg.client_delay_ms, jitter_ms=cfg.jitter_ms),
        ClockConfig.linear(spec.n, cfg.skew_ms),
        TimerConfig(hb_hz=cfg.hb_hz, lst_hz=cfg.lst_hz, stab_hz=cfg.stab_hz),
        WorkloadConfig(put_rate=cfg.put_rate, get_rate=cfg.get_rate, duration_ms=cfg.duration_ms),
        seed=seed,
    )


def metrics_of(cfg: ExperimentConfig, seed: int, res: SimResult, report: Report | None) -> RunMetrics:
    lats = res.latencies
    if any(x < 0 or not math.isfinite(x) for x in lats):
        raise ExperimentError(f"negative or non-finite latency sample in seed {seed}")
    by_server: dict[int, list[int]] = {}
    for s in res.samples:
        by_server.setdefault(s.server, []).append(s.latency)
    verdict = "SKIP" if report is None else ("PASS" if report.ok else "FAIL")
    return RunMetrics(
        mode=cfg.mode,
        n=cfg.spec.n,
        delay_ms=cfg.delay_ms,
        hb_hz=cfg.hb_hz,
        stab_hz=cfg.stab_hz,
        skew_ms=cfg.skew_ms,
        put_rate=cfg.put_rate,
        seed=seed,
        mean_lat_ms=_round(statistics.fmean(lats)) if lats else math.nan,
        p99_lat_ms=_round(percentile(lats, 99)),
        msgs_total=sum(res.messages.values()),
        verdict=verdict,
        samples=len(lats),
        per_server={s: _round(statistics.fmean(v)) for s, v in sorted(by_server.items())},
        messages=dict(sorted(res.messages.items())),
        report=report,
    )


def run_experiment(cfg: ExperimentConfig, trace_dir: str | Path | None = None) -> MetricsReport:
    """One simulation per seed, each checked; traces optionally written to ``trace_dir``."""
    runs = []
    for seed in cfg.seeds:
        res = simulate(cfg, seed)
        report = check_trace(res.trace) if cfg.check else None
        if trace_dir is not None:
            d = Path(trace_dir)
            d.mkdir(parents=True, exist_ok=True)
            res.trace.write(d / f"{cfg.mode}-n{cfg.spec.n}-seed{seed}.trace")
        runs.append(metrics_of(cfg, seed, res, report))
    return MetricsReport(cfg, runs)


# ---- comparison ----------------------------------------------------------

def sign_test(wins: int, losses: int) -> float:
    """Two-sided exact binomial sign test p-value (ties dropped)."""
    n = wins + losses
    if n == 0:
        return 1.0
    k = min(wins, losses)
    tail = sum(math.comb(n, x) for x in range(k + 1)) / 2 ** n
    return min(1.0, 2 * tail)


@dataclass
class Comparison:
    modes: tuple[str, ...]
    reports: dict[str, MetricsReport]
    pairs: list[dict]

    def table(self) -> str:
        lines = ["baseline  other  seeds  mean_ratio  other_higher  p_value"]
        for p in self.pairs:
            lines.append(
                f"{p['baseline']:<9} {p['other']:<6} {p['seeds']:>5}  {p['mean_ratio']!s:>10}  "
                f"{p['other_higher']:>12}  {p['p_value']:.4g}"
            )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"modes": list(self.modes), "pairs": self.pairs,
                "reports": {m: r.to_dict() for m, r in self.reports.items()}}

    @property
    def runs(self) -> list[RunMetrics]:
        return [r for rep in self.reports.values() for r in rep.runs]


def compare_modes(cfg: ExperimentConfig, modes: Iterable[str]) -> Comparison:
    """Run each mode on the same seeds; ratios are other/baseline per seed, baseline = first mode."""
    modes = tuple(modes)
    if len(modes) < 2:
        raise ValueError("compare_modes needs at least two modes")
    reports = {m: run_experiment(replace(cfg, mode=m)) for m in modes}
    keys = {m: ("full" if m == "ours" else m) for m in modes}
    base = modes[0]
    pairs = []
    for other in modes[1:]:
        ratios = []
        hi = lo = 0
        for a, b in zip(reports[base].runs, reports[other].runs):
            if math.isnan(a.mean_lat_ms) or math.isnan(b.mean_lat_ms):
                continue
            if a.mean_lat_ms > 0:
                ratios.append(b.mean_lat_ms / a.mean_lat_ms)
            hi += b.mean_lat_ms > a.mean_lat_ms
            lo += b.mean_lat_ms < a.mean_lat_ms
        pairs.append({
            "baseline": keys[base],
            "other": keys[other],
            "seeds": len(cfg.seeds),
            "ratios": [_round(r) for r in ratios],
            "mean_ratio": _round(statistics.fmean(ratios)) if ratios else None,
            "other_higher": hi,
            "other_lower": lo,
            "p_value": sign_test(hi, lo),
        })
    return Comparison(modes, {keys[m]: r for m, r in reports.items()}, pairs)


# ---- output --------------------------------------------------------------

def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.4f}".rstrip("0").rstrip(".") if not x.is_integer() else str(int(x))
    return str(x)


def csv_text(runs: Iterable[RunMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(runs, key=lambda r: (r.mode, r.n, r.seed)):
        w.writerow([_fmt(v) for v in r.row().values()])
    return buf.getvalue()


def emit_csv(report, path: str | Path) -> Path:
    """Write one row per run. ``report`` is a MetricsReport, a Comparison or a list of runs."""
    runs = report.runs if hasattr(report, "runs") else list(report)
    path = Path(path)
    path.write_text(csv_text(runs))
    return path


def emit_json(report, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True, default=str) + "\n")
    return path


# ---- randomized safety scenarios -----------------------------------------

@dataclass
class Scenario:
    seed: int
    spec: TopologySpec
    groups: GroupConfig
    net: NetConfig
    clocks: ClockConfig
    timers: TimerConfig
    workload: WorkloadConfig

    def run(self, options: ServerOptions = ServerOptions()) -> SimResult:
        return run(self.spec, self.groups, self.net, self.clocks, self.timers, self.workload,
                   seed=self.seed, options=options)


def random_scenario(seed: int, max_n: int = 7, holds: bool = True) -> Scenario:
    """Random topology (n <= max_n), mode, delays 0-200 ms, skews 0-100 ms, mixed GET/PUT.

    Basic and general modes migrate; general mode splits each access set into
    one or two groups at random. ``holds`` adds occasional long channel stalls.
    """
    rng = random.Random(f"scenario:{seed}")
    n = rng.randint(2, max_n)
    spec = random_topology(rng, n, rng.randint(1, 2 * n), rng.randint(1, 4))
    mode = rng.choice(["full", "basic", "general"])
    groups = None
    if mode == "general":
        parts = set()
        for acc in spec.client_access.values():
            acc = sorted(acc)
            rng.shuffle(acc)
            cut = rng.randint(1, len(acc))
            parts.add(frozenset(acc[:cut]))
            if acc[cut:]:
                parts.add(frozenset(acc[cut:]))
        groups = parts
    cfg = GroupConfig.for_mode(mode, spec, groups)
    try:
        for acc in spec.client_access.values():
            cfg.client_groups(acc)
    except ValueError:
        cfg = GroupConfig.for_mode(mode, spec)
    stalls = ()
    if holds:
        stalls = tuple(
            Hold(a, b, rng.randint(0, 300), rng.randint(300, 2000))
            for a in range(n) for b in range(n) if a != b and rng.random() < 0.15
        )
    net = NetConfig(delay_ms=rng.randint(0, 200), client_delay_ms=rng.randint(0, 20),
                    jitter_ms=rng.choice([0, 0, 30]), holds=stalls)
    clocks = ClockConfig.of({s: rng.randint(0, 100) for s in range(n)})
    timers = TimerConfig(hb_hz=rng.choice([10, 50, 100]), lst_hz=rng.choice([20, 100, 1000]), stab_hz=100)
    workload = WorkloadConfig(put_rate=50, get_rate=50, duration_ms=600,
                              migrate_prob=0.3 if mode != "full" else 0.0, drain_ms=3000)
    return Scenario(seed, spec, cfg, net, clocks, timers, workload)
