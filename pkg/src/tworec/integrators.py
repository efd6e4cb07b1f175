"""Integrators: map a market (and its rank-order lists) to a recommendation matrix.

``da_iterative`` and ``ecda_iterative`` run the proposal/rejection protocols
literally and work with any rank-order lists. ``greedy_da`` and
``greedy_ecda`` are the single-pass equivalents for dating-rate lists: one
sort of the pairs by descending dating rate, then a linear scan.
"""
from __future__ import annotations

import csv
import enum
import heapq
import math
from collections import deque
from dataclasses import dataclass

import numba
import numpy as np

from .market import Market, RankOrderLists, SortKind, build_rols

# residual capacities below this are treated as exhausted in the fractional protocol
FRACTION_EPS = 1e-12


class Exposure(str, enum.Enum):
    HEADCOUNT = "headcount"
    LIKE = "like"
    DATE = "date"


class NonTerminationError(RuntimeError):
    """The iterative protocol exceeded its round bound."""


@dataclass(frozen=True, eq=False)
class RecommendationMatrix:
    """Sparse recommendation matrix aligned with the market's pair list.

    ``values[p]`` is the probability of recommending pair p's receiver to its proposer.
    """

    market: Market
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != (self.market.n_pairs,):
            raise ValueError(f"expected {self.market.n_pairs} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.market.shape

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.market.proposer, weights=self.values, minlength=self.market.n_proposers)

    def column_sums(self, weights=None) -> np.ndarray:
        v = self.values if weights is None else self.values * weights
        return np.bincount(self.market.receiver, weights=v, minlength=self.market.n_receivers)

    def to_dense(self) -> np.ndarray:
        return self.market.dense(self.values)

    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))

    def check_feasible(self, tol: float = 1e-9) -> None:
        v = self.values
        if np.any(v < 0) or np.any(v > 1 + tol):
            raise ValueError("recommendation entries must lie in [0, 1]")
        over = np.flatnonzero(self.row_sums() > self.market.capacity + tol)
        if len(over):
            raise ValueError(f"row capacity exceeded for proposers {over[:10].tolist()}")

    @classmethod
    def zeros(cls, market: Market) -> "RecommendationMatrix":
        return cls(market, np.zeros(market.n_pairs))


@dataclass(frozen=True, eq=False)
class ExposureWeights:
    kind: Exposure
    values: np.ndarray


def exposure_weights(kind: Exposure | str, market: Market) -> ExposureWeights:
    """Budget consumed at a receiver per unit of recommendation of each pair."""
    kind = Exposure(kind)
    if kind is Exposure.HEADCOUNT:
        values = np.ones(market.n_pairs)
    elif kind is Exposure.LIKE:
        values = np.array(market.like_exposure)
    else:
        values = np.array(market.dating_rates)
    values.setflags(write=False)
    return ExposureWeights(kind, values)


def receiver_capacity(market: Market, q, *, integer: bool = False) -> np.ndarray:
    """Broadcast a scalar or per-receiver capacity to a float vector of length J."""
    arr = np.array(np.broadcast_to(np.asarray(q, dtype=np.float64), (market.n_receivers,)))
    if np.any(~np.isfinite(arr) & ~np.isposinf(arr)) or np.any(arr < 0):
        raise ValueError("receiver capacities must be nonnegative")
    if integer and np.any(np.isfinite(arr) & (arr != np.floor(arr))):
        raise ValueError("DA requires integer capacity")
    return arr


def one_sided(market: Market, rols: RankOrderLists) -> RecommendationMatrix:
    """Each proposer gets the top min(c_i, list length) receivers on its list."""
    cap = market.capacity[market.proposer]
    return RecommendationMatrix(market, (rols.proposer_rank < cap).astype(np.float64))


def da_iterative(market: Market, rols: RankOrderLists, q, rng: np.random.Generator | None = None) -> RecommendationMatrix:
    """Many-to-many proposer-proposing deferred acceptance with headcount capacities.

    Proposers with free capacity propose one receiver at a time down their lists.
    A receiver holds its best ``q_j`` proposers and rejects the rest. If ``rng`` is
    given, the next proposer is drawn at random from the active ones instead of
    first-in-first-out; the outcome does not depend on this choice.
    """
    q = receiver_capacity(market, q, integer=True)
    I, J = market.shape
    pptr, ppairs = rols.proposer_ptr, rols.proposer_pairs
    rrank = rols.receiver_rank
    recv = market.receiver
    cap = market.capacity
    qcap = [int(x) if math.isfinite(x) else I for x in q]

    pointer = pptr[:-1].tolist()
    end = pptr[1:].tolist()
    held = [0] * I
    # per receiver: heap of (-rank, pair) so the worst held proposer is on top
    heaps: list[list[tuple[int, int]]] = [[] for _ in range(J)]
    accepted = np.zeros(market.n_pairs, dtype=bool)

    active = [i for i in range(I) if pointer[i] < end[i]]
    queue = deque(active) if rng is None else active
    in_queue = [False] * I
    for i in active:
        in_queue[i] = True

    def pop_next() -> int:
        if rng is None:
            return queue.popleft()
        k = int(rng.integers(len(queue)))
        queue[k], queue[-1] = queue[-1], queue[k]
        return queue.pop()

    while queue:
        i = pop_next()
        in_queue[i] = False
        while held[i] < cap[i] and pointer[i] < end[i]:
            p = int(ppairs[pointer[i]])
            pointer[i] += 1
            j = int(recv[p])
            heap = heaps[j]
            entry = (-int(rrank[p]), p)
            if qcap[j] <= 0:
                pass
            elif len(heap) < qcap[j]:
                heapq.heappush(heap, entry)
                accepted[p] = True
                held[i] += 1
            elif entry > heap[0]:
                _, out = heapq.heapreplace(heap, entry)
                accepted[out] = False
                accepted[p] = True
                held[i] += 1
                k = int(market.proposer[out])
                held[k] -= 1
                if not in_queue[k] and pointer[k] < end[k]:
                    in_queue[k] = True
                    queue.append(k)
            if rng is not None:
                break  # one proposal per turn so random schedules interleave
        if held[i] < cap[i] and pointer[i] < end[i] and not in_queue[i]:
            in_queue[i] = True
            queue.append(i)
    return RecommendationMatrix(market, accepted.astype(np.float64))


def round_bound(market: Market) -> int:
    cmax = int(market.capacity.max()) if market.n_proposers else 0
    return 2 * market.n_pairs * (1 + cmax)


def ecda_iterative(
    market: Market,
    rols: RankOrderLists,
    q,
    w: ExposureWeights,
    rng: np.random.Generator | None = None,
    max_rounds: int | None = None,
) -> RecommendationMatrix:
    """Fractional deferred acceptance with exposure budgets.

    Each round one proposer with residual capacity offers
    ``min(1 - held amount, residual)`` to the best receiver on its list that has
    not (even partially) rejected it. The receiver re-ranks everyone it holds
    plus the newcomer by its own list, charging ``w_ij`` per unit held against
    ``q_j``; the boundary proposer is accepted fractionally and the rest are
    rejected. Zero-weight pairs never consume budget.
    """
    q = receiver_capacity(market, q)
    I, J = market.shape
    if max_rounds is None:
        max_rounds = round_bound(market)
    weights = w.values
    pptr, ppairs = rols.proposer_ptr, rols.proposer_pairs
    rrank = rols.receiver_rank.tolist()
    recv = market.receiver.tolist()
    prop = market.proposer.tolist()
    wl = weights.tolist()

    m = [0.0] * market.n_pairs
    rejected = [False] * market.n_pairs
    residual = market.capacity.astype(np.float64).tolist()
    pointer = pptr[:-1].tolist()
    end = pptr[1:].tolist()
    ppairs_l = ppairs.tolist()
    holding: list[dict[int, float]] = [dict() for _ in range(J)]  # pair -> offered/held amount

    def advance(i: int) -> bool:
        k = pointer[i]
        while k < end[i]:
            p = ppairs_l[k]
            if not rejected[p] and m[p] < 1.0 - FRACTION_EPS:
                break
            k += 1
        pointer[i] = k
        return k < end[i]

    def is_active(i: int) -> bool:
        return residual[i] > FRACTION_EPS and advance(i)

    active = [i for i in range(I) if is_active(i)]
    queue = deque(active) if rng is None else active
    in_queue = [False] * I
    for i in active:
        in_queue[i] = True

    rounds = 0
    while queue:
        if rng is None:
            i = queue.popleft()
        else:
            k = int(rng.integers(len(queue)))
            queue[k], queue[-1] = queue[-1], queue[k]
            i = queue.pop()
        in_queue[i] = False
        if not is_active(i):
            continue
        rounds += 1
        if rounds > max_rounds:
            raise NonTerminationError(f"fractional deferred acceptance exceeded {max_rounds} rounds")

        p = ppairs_l[pointer[i]]
        j = recv[p]
        amount = min(1.0 - m[p], residual[i])
        residual[i] -= amount
        held = holding[j]
        held[p] = m[p] + amount

        # receiver re-evaluates from scratch in its list order
        budget = q[j]
        for r in sorted(held, key=rrank.__getitem__):
            offered = held[r]
            wr = wl[r]
            if wr <= 0.0:
                take = offered
            elif budget <= 0.0:
                take = 0.0
            else:
                take = min(offered, budget / wr)
                budget -= wr * take
            if take < offered:
                rejected[r] = True
                k = prop[r]
                residual[k] += offered - take
                if not in_queue[k] and is_active(k):
                    in_queue[k] = True
                    queue.append(k)
            m[r] = take
            if take > 0.0:
                held[r] = take
            else:
                del held[r]
        if not in_queue[i] and is_active(i):
            in_queue[i] = True
            queue.append(i)
    return RecommendationMatrix(market, np.array(m))


# ---------------------------------------------------------------------------
# greedy fast paths


@numba.njit(cache=True)
def _greedy_headcount_scan(order, proposer, receiver, capacity, q):
    out = np.zeros(len(proposer))
    row = np.zeros(len(capacity), dtype=np.int64)
    col = np.zeros(len(q))
    for k in range(len(order)):
        p = order[k]
        i = proposer[p]
        j = receiver[p]
        if row[i] < capacity[i] and col[j] + 1.0 <= q[j]:
            out[p] = 1.0
            row[i] += 1
            col[j] += 1.0
    return out


@numba.njit(cache=True)
def _greedy_exposure_scan(order, proposer, receiver, weights, capacity, q):
    out = np.zeros(len(proposer))
    residual = capacity.astype(np.float64)
    budget = q.copy()
    for k in range(len(order)):
        p = order[k]
        i = proposer[p]
        j = receiver[p]
        r = residual[i]
        if r <= 0.0:
            continue
        a = 1.0 if r > 1.0 else r
        wp = weights[p]
        if wp > 0.0:
            b = budget[j]
            if b <= 0.0:
                continue
            lim = b / wp
            if lim < a:
                a = lim
            budget[j] = b - wp * a
        out[p] = a
        residual[i] = r - a
    return out


def greedy_da(market: Market, q) -> RecommendationMatrix:
    """Deferred acceptance on dating-rate lists via one greedy pass over sorted pairs."""
    q = receiver_capacity(market, q, integer=True)
    vals = _greedy_headcount_scan(market.greedy_order, market.proposer, market.receiver, market.capacity, q)
    return RecommendationMatrix(market, vals)


def greedy_ecda(market: Market, q, w: ExposureWeights) -> RecommendationMatrix:
    """Exposure-constrained deferred acceptance on dating-rate lists, single greedy pass.

    Each pair in descending dating-rate order receives
    ``min(1, c_i - row sum, (q_j - exposure used at j) / w_ij)``.
    """
    q = receiver_capacity(market, q)
    vals = _greedy_exposure_scan(
        market.greedy_order, market.proposer, market.receiver, np.asarray(w.values), market.capacity, q
    )
    return RecommendationMatrix(market, vals)


def integrate(
    market: Market,
    integrator: str,
    sort_kind: SortKind | str = SortKind.DATE,
    q=None,
    exposure: Exposure | str | None = None,
) -> RecommendationMatrix:
    """Dispatch by name. Dating-rate lists use the greedy paths; like-rate lists run the protocols."""
    sort_kind = SortKind(sort_kind)
    integrator = integrator.lower().replace("-", "_")
    if integrator == "one_sided":
        return one_sided(market, build_rols(market, sort_kind))
    if q is None:
        raise ValueError(f"{integrator} requires a receiver capacity")
    if integrator == "da":
        if sort_kind is SortKind.DATE:
            return greedy_da(market, q)
        return da_iterative(market, build_rols(market, sort_kind), q)
    if integrator == "ecda":
        if exposure is None:
            raise ValueError("ECDA requires an exposure kind")
        w = exposure_weights(exposure, market)
        if sort_kind is SortKind.DATE:
            return greedy_ecda(market, q, w)
        return ecda_iterative(market, build_rols(market, sort_kind), q, w)
    raise ValueError(f"unknown integrator {integrator!r}")


MATRIX_HEADER = ["proposer_id", "receiver_id", "m"]


def write_matrix_csv(M: RecommendationMatrix, path) -> None:
    """Nonzero entries in (proposer, receiver) order."""
    market = M.market
    nz = np.flatnonzero(M.values)
    key = market.proposer[nz].astype(np.int64) * market.n_receivers + market.receiver[nz]
    nz = nz[np.argsort(key, kind="stable")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MATRIX_HEADER)
        for p in nz.tolist():
            w.writerow([int(market.proposer[p]), int(market.receiver[p]), repr(float(M.values[p]))])


def read_matrix_csv(path, market: Market) -> RecommendationMatrix:
    key = market.proposer.astype(np.int64) * market.n_receivers + market.receiver
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    values = np.zeros(market.n_pairs)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != MATRIX_HEADER:
            raise ValueError(f"{path}: header must be {','.join(MATRIX_HEADER)}")
        for row in reader:
            if not row:
                continue
            i, j, v = int(row[0]), int(row[1]), float(row[2])
            k = i * market.n_receivers + j
            pos = np.searchsorted(sorted_key, k)
            if not (0 <= i < market.n_proposers and 0 <= j < market.n_receivers) or pos >= len(sorted_key) or sorted_key[pos] != k:
                raise ValueError(f"{path}: ({i},{j}) is not an eligible pair")
            values[order[pos]] = v
    M = RecommendationMatrix(market, values)
    M.check_feasible()
    return M
