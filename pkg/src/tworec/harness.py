"""Run configurations, capacity sweeps and distribution reports.

A run writes into ``<out>/<run id>/`` where the run id is a hash of the
resolved configuration and the contents of its input files. Outputs are built
in a temporary sibling directory and renamed into place, so a failed run
leaves nothing behind.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .decompose import birkhoff_decompose
from .integrators import RecommendationMatrix, integrate, write_matrix_csv
from .market import Market, SortKind, read_market_csv, validate_market
from .metrics import ORACLE_MAX_LEN, MetricsReport, OracleScaleError, expected_metrics
from .realization import monte_carlo, write_event_logs
from .synth import load_synth_spec, sample_market

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "TWOREC_OUTPUT_ROOT"
INTEGRATORS = ("one_sided", "da", "ecda")

# Default capacity grids. These are choices for the shipped distribution, not
# reproductions of any published grid.
DEFAULT_GRIDS = {
    "da": [5, 10, 15, 20, 25, 30, 40, 50, 75, 100, 150, 200, 300, 500, 1000],
    "ecda:date": [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 20.0],
    "ecda:like": [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 40.0, 60.0],
}


class ConfigError(ValueError):
    pass


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


@dataclass(frozen=True)
class RunConfig:
    market: str | None = None
    capacities: str | None = None
    default_capacity: int = 25
    synth: str | None = None
    integrator: str = "one_sided"
    sort: str = "date"
    exposure: str | None = None
    q: float | None = None
    q_file: str | None = None
    mc_days: int = 0
    login: str = "user"
    oracle: bool = False
    decompose: bool = False
    events: bool = False
    seed: int = 0
    out: str | None = None

    def validate(self) -> "RunConfig":
        if (self.market is None) == (self.synth is None):
            raise ConfigError("exactly one of market / synth is required")
        integ = self.integrator.lower().replace("-", "_")
        if integ not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}")
        try:
            SortKind(self.sort)
        except ValueError:
            raise ConfigError("sort must be 'like' or 'date'") from None
        if integ != "one_sided" and self.q is None and self.q_file is None:
            raise ConfigError(f"{integ} requires a receiver capacity (q or q_file)")
        if integ == "ecda" and self.exposure not in ("headcount", "like", "date"):
            raise ConfigError("ECDA requires exposure in {headcount, like, date}")
        if integ == "da" and self.q is not None and math.isfinite(self.q) and self.q != math.floor(self.q):
            raise ConfigError("DA requires integer capacity")
        if self.q is not None and self.q < 0:
            raise ConfigError("capacity must be nonnegative")
        if self.mc_days < 0:
            raise ConfigError("mc_days must be >= 0")
        if self.login not in ("user", "pair"):
            raise ConfigError("login must be 'user' or 'pair'")
        return replace(self, integrator=integ)

    def canonical(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "out":
                continue
            lines.append(f"{f.name}={_fmt(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _coerce(name: str, raw):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    if raw is None or isinstance(raw, (bool, int, float)) and not isinstance(raw, str):
        return raw
    raw = str(raw).strip()
    t = types[name]
    if raw == "" and "None" in t:
        return None
    try:
        if t.startswith("bool"):
            return _BOOL[raw.lower()]
        if t.startswith("int"):
            return int(raw)
        if t.startswith("float"):
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.replace("-", "_")
        out[k] = _coerce(k, v)
    return out


def make_config(file_values: dict | None = None, **overrides) -> RunConfig:
    values = dict(file_values or {})
    values.update({k: _coerce(k, v) for k, v in overrides.items() if v is not None})
    return RunConfig(**values).validate()


# ---------------------------------------------------------------------------
# inputs


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_market(config: RunConfig) -> Market:
    if config.market is not None:
        return read_market_csv(config.market, config.capacities, config.default_capacity)
    dist, cfg, dataset = load_synth_spec(config.synth)
    return validate_market(sample_market(dist, cfg, dataset))


def load_receiver_capacity(path, market: Market) -> np.ndarray:
    q = np.full(market.n_receivers, np.nan)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["receiver_id", "q"]:
            raise ConfigError(f"{path}: header must be receiver_id,q")
        for row in reader:
            if row:
                j = int(row[0])
                if not 0 <= j < market.n_receivers:
                    raise ConfigError(f"{path}: receiver {j} not in market")
                q[j] = float(row[1])
    if np.isnan(q).any():
        raise ConfigError(f"{path}: missing capacity for receivers {np.flatnonzero(np.isnan(q))[:10].tolist()}")
    return q


def run_id(config: RunConfig) -> str:
    h = hashlib.sha256(config.canonical().encode())
    for p in (config.market, config.capacities, config.synth, config.q_file):
        if p is not None:
            h.update(_file_digest(p).encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# outputs

METRIC_COLUMNS = list(MetricsReport.SCALARS)


def write_rows(path, rows: list[dict], columns: list[str] | None = None) -> None:
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in columns})


def write_receiver_load(path, report: MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["receiver_id", "mu", "like_load"])
        for j, (mu, ll) in enumerate(zip(report.receiver_load.tolist(), report.receiver_like_load.tolist())):
            w.writerow([j, repr(mu), repr(ll)])


def write_manifest(directory: Path) -> Path:
    entries = sorted(p for p in directory.rglob("*") if p.is_file() and p.name != "manifest.txt")
    manifest = directory / "manifest.txt"
    with open(manifest, "w") as fh:
        for p in entries:
            fh.write(f"{_file_digest(p)}  {p.relative_to(directory).as_posix()}\n")
    return manifest


def histogram_rows(values: np.ndarray, bins: int = 50, upper: float | None = None) -> list[dict]:
    hi = float(values.max()) if upper is None and len(values) else (upper or 0.0)
    if hi <= 0:
        hi = 1.0
    counts, edges = np.histogram(values, bins=bins, range=(0.0, hi))
    return [{"bin_lo": float(a), "bin_hi": float(b), "count": int(c)} for a, b, c in zip(edges[:-1], edges[1:], counts)]


def cap_spike(load: np.ndarray, q: float, tol: float = 1e-6) -> int:
    """Number of receivers whose load sits at the cap ``q`` (within ``tol``)."""
    return int(np.count_nonzero(np.abs(np.asarray(load) - q) <= tol))


def distribution_report(M: RecommendationMatrix, market: Market, directory=None, bins: int = 50) -> dict:
    """Per-receiver expected likes and dates, plus histograms of both.

    Returns ``{"receiver_load", "receiver_like_load", "dates_hist", "likes_hist"}``;
    with ``directory`` set, also writes receiver_load.csv, hist_dates.csv, hist_likes.csv.
    """
    mu = metrics_mod.receiver_load(M, market)
    like = metrics_mod.receiver_like_load(M, market)
    out = {
        "receiver_load": mu,
        "receiver_like_load": like,
        "dates_hist": histogram_rows(mu, bins),
        "likes_hist": histogram_rows(like, bins),
    }
    if directory is not None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "receiver_load.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["receiver_id", "mu", "like_load"])
            for j, (a, b) in enumerate(zip(mu.tolist(), like.tolist())):
                w.writerow([j, repr(a), repr(b)])
        write_rows(d / "hist_dates.csv", out["dates_hist"], ["bin_lo", "bin_hi", "count"])
        write_rows(d / "hist_likes.csv", out["likes_hist"], ["bin_lo", "bin_hi", "count"])
    return out


def _capacity_arg(config: RunConfig, market: Market):
    if config.q_file is not None:
        return load_receiver_capacity(config.q_file, market)
    return config.q


def compute(config: RunConfig, market: Market | None = None):
    """Integrate and evaluate without touching disk. Returns (market, M, metrics row, report)."""
    if market is None:
        market = load_market(config)
    if config.oracle:
        per_recv = np.bincount(market.receiver, minlength=market.n_receivers)
        if per_recv.max(initial=0) > ORACLE_MAX_LEN:
            raise OracleScaleError(f"a receiver has {per_recv.max()} pairs; oracle bound is {ORACLE_MAX_LEN}")
    q = _capacity_arg(config, market)
    try:
        M = integrate(market, config.integrator, config.sort, q, config.exposure)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = expected_metrics(M, market)
    row = report.as_row()
    if config.oracle:
        exact = metrics_mod.exact_effective_rates(M, market)
        row["avg_effective_dates_exact"] = float((exact * M.values).sum()) / market.n_proposers
    return market, M, row, report


def run(config: RunConfig, market: Market | None = None) -> Path:
    """Execute one configuration and write its artifacts; returns the run directory."""
    config = config.validate()
    root = Path(config.out) if config.out else default_output_root()
    rid = run_id(config)
    final = root / rid
    root.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{rid}.", dir=root))
    try:
        market, M, row, report = compute(config, market)
        (tmp / "config.txt").write_text(config.canonical())
        write_matrix_csv(M, tmp / "matrix.csv")
        write_rows(tmp / "metrics.csv", [{"run_id": rid, **row}])
        write_receiver_load(tmp / "receiver_load.csv", report)
        if config.mc_days > 0:
            result = monte_carlo(M, market, config.mc_days, config.seed, login=config.login, keep_logs=config.events)
            mc, logs = result if config.events else (result, None)
            write_rows(tmp / "realized.csv", [{"run_id": rid, **mc.as_row()}])
            if logs is not None:
                write_event_logs(logs, tmp / "events.csv")
        if config.decompose:
            birkhoff_decompose(M, market).write(tmp / "decomposition")
        write_manifest(tmp)
        if final.exists():
            shutil.rmtree(final)
        tmp.rename(final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    log.info("run %s written to %s", rid, final)
    return final


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    base: RunConfig
    grid: list[float] = field(default_factory=list)
    integrators: list[str] = field(default_factory=lambda: ["one_sided", "da", "ecda:date"])
    grids: dict[str, list[float]] = field(default_factory=dict)

    def grid_for(self, integrator: str) -> list[float]:
        if integrator in self.grids:
            return list(self.grids[integrator])
        if self.grid:
            return list(self.grid)
        return list(DEFAULT_GRIDS.get(integrator, []))

    def validate(self) -> "SweepSpec":
        for name in self.integrators:
            kind, _, exposure = name.partition(":")
            if kind not in INTEGRATORS:
                raise ConfigError(f"unknown integrator {name!r}")
            if kind == "ecda" and exposure not in ("headcount", "like", "date"):
                raise ConfigError(f"{name!r}: ECDA needs an exposure suffix, e.g. ecda:date")
            if kind == "one_sided":
                continue
            g = self.grid_for(name)
            if not g:
                raise ConfigError(f"{name}: capacity grid is empty")
            if any(b <= a for a, b in zip(g, g[1:])):
                raise ConfigError(f"{name}: capacity grid must be strictly increasing")
        return self

    def points(self) -> list[tuple[str, str | None, float | None]]:
        pts = []
        for name in self.integrators:
            kind, _, exposure = name.partition(":")
            if kind == "one_sided":
                pts.append((kind, None, None))
            else:
                pts += [(kind, exposure or None, float(q)) for q in self.grid_for(name)]
        return pts


_WORKER_MARKET: dict = {}


def _point_label(kind: str, exposure: str | None, q: float | None) -> str:
    label = kind if exposure is None else f"{kind}_{exposure}"
    return label if q is None else f"{label}_q{q:g}"


def _run_point(args) -> dict:
    base, kind, exposure, q, point_dir = args
    row = {"integrator": kind, "exposure": exposure or "", "sort": base.sort, "q": "" if q is None else q}
    try:
        cfg = replace(base, integrator=kind, exposure=exposure, q=q, q_file=None, mc_days=0, decompose=False, oracle=False).validate()
        key = (base.market, base.capacities, base.synth, base.default_capacity)
        market = _WORKER_MARKET.get(key)
        if market is None:
            market = load_market(base)
            _WORKER_MARKET.clear()
            _WORKER_MARKET[key] = market
        _, M, metrics_row, report = compute(cfg, market)
        if point_dir is not None:
            d = Path(point_dir)
            d.mkdir(parents=True, exist_ok=True)
            write_rows(d / "metrics.csv", [metrics_row])
            write_receiver_load(d / "receiver_load.csv", report)
        row.update(metrics_row)
        row["status"] = "ok"
        row["error"] = ""
    except Exception as exc:  # per-point failures are recorded, the sweep goes on
        row["status"] = "error"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


FRONTIER_COLUMNS = ["integrator", "exposure", "sort", "q", *METRIC_COLUMNS, "status", "error"]


def sweep(spec: SweepSpec, directory=None, jobs: int = 1, market: Market | None = None) -> list[dict]:
    """Evaluate every (integrator, q) point; rows come back in grid order.

    With ``directory`` set, each point writes into ``points/<label>/`` and the
    assembled rows go to ``frontier.csv``.
    """
    spec.validate()
    base = spec.base
    pts = spec.points()
    directory = Path(directory) if directory is not None else None
    tasks = []
    for kind, exposure, q in pts:
        pdir = None if directory is None else str(directory / "points" / _point_label(kind, exposure, q))
        tasks.append((base, kind, exposure, q, pdir))
    if market is not None:
        key = (base.market, base.capacities, base.synth, base.default_capacity)
        _WORKER_MARKET.clear()
        _WORKER_MARKET[key] = market
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_point, tasks))
    else:
        rows = [_run_point(t) for t in tasks]
    if directory is not None:
        directory.mkdir(parents=True, exist_ok=True)
        write_rows(directory / "frontier.csv", rows, FRONTIER_COLUMNS)
    return rows


def interior_maximum(rows: list[dict], column: str = "avg_effective_dates") -> tuple[int, bool]:
    """Index of the best grid point and whether it beats both grid ends strictly."""
    vals = [r[column] for r in rows]
    k = int(np.argmax(vals))
    return k, 0 < k < len(vals) - 1 and vals[k] > vals[0] and vals[k] > vals[-1]
