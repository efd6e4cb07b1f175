"""Decompose a fractional recommendation matrix into deterministic daily menus.

Only proposer row capacities bind per component; receiver exposure holds in
expectation through the reconstruction.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .integrators import RecommendationMatrix
from .market import Market

ZERO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MenuDecomposition:
    """``weights[k]`` and boolean ``components[k]`` aligned with the market's pair list."""

    market: Market
    weights: np.ndarray
    components: np.ndarray  # shape (K, n_pairs), bool

    @property
    def count(self) -> int:
        return len(self.weights)

    def reconstruct(self) -> np.ndarray:
        return self.weights @ self.components

    def component_matrix(self, k: int) -> RecommendationMatrix:
        return RecommendationMatrix(self.market, self.components[k].astype(np.float64))

    def write(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = [directory / "components.csv"]
        with open(written[0], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "weight"])
            for k, wt in enumerate(self.weights.tolist()):
                w.writerow([k, repr(wt)])
        pi, pj = self.market.proposer, self.market.receiver
        for k in range(self.count):
            path = directory / f"component_{k:04d}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["proposer_id", "receiver_id", "m"])
                for p in np.flatnonzero(self.components[k]):
                    w.writerow([int(pi[p]), int(pj[p]), 1])
            written.append(path)
        return written


class InfeasibleMatrixError(ValueError):
    pass


def birkhoff_decompose(M: RecommendationMatrix, market: Market, tol: float = 1e-9) -> MenuDecomposition:
    """Write M as a convex combination of 0/1 menus that respect row capacities.

    Each step picks, per proposer, its up to c_i largest positive residual
    entries and extracts them with the largest weight that keeps the rest
    decomposable: no more than the smallest selected residual, and no more than
    the remaining total weight minus the largest unselected residual. Any
    weight left once the residual is zero goes to the empty menu.
    """
    v = np.array(M.values, dtype=np.float64)
    if np.any(v < -tol) or np.any(v > 1 + tol):
        raise InfeasibleMatrixError("entries must lie in [0, 1]")
    rows = np.bincount(market.proposer, weights=v, minlength=market.n_proposers)
    if np.any(rows > market.capacity + tol):
        raise InfeasibleMatrixError("row capacity exceeded")
    v = np.clip(v, 0.0, 1.0)

    support = np.flatnonzero(v > ZERO_TOL)
    sup_row = market.proposer[support].astype(np.int64)
    # fixed scan order inside each row: by proposer, then pair index
    order = np.lexsort((support, sup_row))
    support, sup_row = support[order], sup_row[order]
    starts = np.searchsorted(sup_row, np.arange(market.n_proposers + 1))
    cap = market.capacity

    residual = v[support].copy()
    remaining = 1.0
    weights: list[float] = []
    comps: list[np.ndarray] = []
    max_steps = len(support) * 2 + 2
    while np.any(residual > ZERO_TOL):
        if len(weights) > max_steps:
            raise RuntimeError("decomposition failed to converge")
        selected = np.zeros(len(support), dtype=bool)
        theta = remaining
        for i in np.flatnonzero(np.diff(starts)):
            lo, hi = starts[i], starts[i + 1]
            r = residual[lo:hi]
            pos = np.flatnonzero(r > ZERO_TOL)
            if len(pos) == 0:
                continue
            # largest residual first; stable so ties go to the lower pair index
            ranked = pos[np.argsort(-r[pos], kind="stable")]
            take = ranked[: cap[i]]
            selected[lo + take] = True
            theta = min(theta, float(r[take].min()))
            if len(ranked) > len(take):
                theta = min(theta, remaining - float(r[ranked[len(take)]]))
        if theta <= ZERO_TOL:
            if remaining <= tol:
                break  # rounding dust from a matrix sitting on its capacity bound
            raise InfeasibleMatrixError("no feasible extraction step; matrix violates row capacity")
        comp = np.zeros(market.n_pairs, dtype=bool)
        comp[support[selected]] = True
        weights.append(theta)
        comps.append(comp)
        residual[selected] -= theta
        residual[np.abs(residual) <= ZERO_TOL] = 0.0
        remaining -= theta
    if remaining > ZERO_TOL:
        weights.append(remaining)
        comps.append(np.zeros(market.n_pairs, dtype=bool))
    comps_arr = np.array(comps, dtype=bool).reshape(len(comps), market.n_pairs)
    return MenuDecomposition(market, np.array(weights), comps_arr)
