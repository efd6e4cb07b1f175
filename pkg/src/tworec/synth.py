"""Synthetic markets drawn from a binned joint distribution of user rates.

Proposers carry a (login, like) profile and receivers a (login, relike)
profile. Each side's profiles are histogrammed on a square grid; markets are
drawn by sampling cells by weight and placing users at the cell midpoint.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .market import Market

PAIR_MODES = ("user", "noise")


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RateDistribution:
    """Per-side cell weights. Each cell is (login bin low edge, rate bin low edge, weight)."""

    bin_width: float
    proposer_cells: np.ndarray
    receiver_cells: np.ndarray

    def __post_init__(self):
        _check_width(self.bin_width)
        for name in ("proposer_cells", "receiver_cells"):
            cells = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1, 3)
            if len(cells) == 0:
                raise SynthConfigError(f"{name} is empty")
            if np.any(cells[:, 2] < 0):
                raise SynthConfigError(f"{name} has negative weights")
            total = cells[:, 2].sum()
            if total <= 0:
                raise SynthConfigError(f"{name} has zero total weight")
            cells[:, 2] /= total
            object.__setattr__(self, name, cells)

    def to_json(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "proposer_cells": self.proposer_cells.tolist(),
            "receiver_cells": self.receiver_cells.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "RateDistribution":
        raw = json.loads(Path(path).read_text())
        return cls(float(raw["bin_width"]), np.array(raw["proposer_cells"]), np.array(raw["receiver_cells"]))


def example_distribution() -> RateDistribution:
    """The shipped right-skewed example distribution (see scripts/make_example_distribution.py)."""
    with resources.as_file(resources.files("tworec") / "data" / "example_distribution.json") as p:
        return RateDistribution.load(p)


def _check_width(width: float) -> int:
    if not width > 0:
        raise SynthConfigError(f"bin width {width} must be positive")
    n = round(1.0 / width)
    if n < 1 or abs(n * width - 1.0) > 1e-9:
        raise SynthConfigError(f"bin width {width} does not divide [0, 1] evenly")
    return n


def _bin_side(samples: np.ndarray, width: float) -> np.ndarray:
    n = _check_width(width)
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    if np.any((samples < 0) | (samples > 1)):
        raise SynthConfigError("rates must lie in [0, 1]")
    # rate 1.0 belongs to the last bin; the small offset absorbs k*width rounding
    idx = np.minimum(np.floor(samples / width + 1e-9).astype(np.int64), n - 1)
    flat = idx[:, 0] * n + idx[:, 1]
    uniq, counts = np.unique(flat, return_counts=True)
    lo = np.column_stack([uniq // n, uniq % n]) * width
    return np.column_stack([np.round(lo, 12), counts / counts.sum()])


def bin_distribution(proposer_samples, receiver_samples, width: float = 0.1) -> RateDistribution:
    """Histogram (login, like) and (login, relike) samples; empty cells are dropped."""
    return RateDistribution(width, _bin_side(proposer_samples, width), _bin_side(receiver_samples, width))


@dataclass(frozen=True)
class SynthConfig:
    n_proposers: int = 1000
    n_receivers: int = 1000
    capacity: int = 25
    seed: int = 0
    n_datasets: int = 10
    pair_mode: str = "noise"
    noise: float = 0.7

    def __post_init__(self):
        if self.n_proposers < 1 or self.n_receivers < 1 or self.capacity < 1 or self.n_datasets < 1:
            raise SynthConfigError("sizes, capacity and n_datasets must be positive")
        if self.pair_mode not in PAIR_MODES:
            raise SynthConfigError(f"pair_mode must be one of {PAIR_MODES}")
        if self.noise < 0:
            raise SynthConfigError("noise must be nonnegative")

    @classmethod
    def synthetic(cls, **kw) -> "SynthConfig":
        return cls(**{**dict(n_proposers=1000, n_receivers=1000, capacity=25, n_datasets=10), **kw})

    @classmethod
    def empirical_scale(cls, **kw) -> "SynthConfig":
        return cls(**{**dict(n_proposers=8000, n_receivers=5000, capacity=65, n_datasets=1), **kw})


def _draw_side(cells: np.ndarray, width: float, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    k = rng.choice(len(cells), size=n, p=cells[:, 2])
    mid = cells[k, :2] + width / 2.0
    return mid[:, 0], mid[:, 1]


def _logit(x):
    return np.log(x) - np.log1p(-x)


def _pair_rates(level: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    # pair rate = user level with independent log-odds noise; stays strictly inside (0, 1)
    z = _logit(level) + noise * rng.standard_normal(level.shape)
    return 1.0 / (1.0 + np.exp(-z))


def sample_market(dist: RateDistribution, cfg: SynthConfig, dataset: int = 0) -> Market:
    """Draw a dense market. Dataset k uses seed ``cfg.seed + k``.

    ``pair_mode="user"``: every pair of a proposer shares its like level, every
    pair of a receiver shares its relike level. ``pair_mode="noise"``: pair rates
    are the user levels perturbed by independent N(0, noise^2) log-odds noise.
    """
    rng = np.random.default_rng([cfg.seed + dataset, 0x5EED])
    lp, alpha_lvl = _draw_side(dist.proposer_cells, dist.bin_width, cfg.n_proposers, rng)
    lr, beta_lvl = _draw_side(dist.receiver_cells, dist.bin_width, cfg.n_receivers, rng)
    I, J = cfg.n_proposers, cfg.n_receivers
    pi = np.repeat(np.arange(I, dtype=np.int32), J)
    pj = np.tile(np.arange(J, dtype=np.int32), I)
    if cfg.pair_mode == "user" or cfg.noise == 0:
        like = alpha_lvl[pi]
        relike = beta_lvl[pj]
    else:
        like = _pair_rates(alpha_lvl[pi], cfg.noise, rng)
        relike = _pair_rates(beta_lvl[pj], cfg.noise, rng)
    return Market(lp, lr, pi, pj, like, relike, np.full(I, cfg.capacity))


def load_synth_spec(path) -> tuple[RateDistribution, SynthConfig, int]:
    """Read a synth spec JSON: ``distribution`` (path or "example"), config fields, ``dataset``."""
    raw = json.loads(Path(path).read_text())
    src = raw.pop("distribution", "example")
    if src == "example":
        dist = example_distribution()
    else:
        p = Path(src)
        if not p.is_absolute():
            p = Path(path).parent / p
        dist = RateDistribution.load(p)
    dataset = int(raw.pop("dataset", 0))
    aliases = {"I": "n_proposers", "J": "n_receivers", "c": "capacity"}
    raw = {aliases.get(k, k): v for k, v in raw.items()}
    try:
        cfg = SynthConfig(**raw)
    except TypeError as exc:
        raise SynthConfigError(str(exc)) from None
    return dist, cfg, dataset
