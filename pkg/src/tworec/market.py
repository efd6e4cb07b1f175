"""Market primitives: login/like/relike rates, dating rates and rank-order lists.

A market is stored as a sparse pair list. Every eligible (proposer, receiver)
pair carries a like rate and a relike rate; pairs absent from the list are
ineligible and never recommended.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class SortKind(str, enum.Enum):
    LIKE = "like"
    DATE = "date"


class MarketValidationError(ValueError):
    """Raised with the complete list of invariant violations of a market."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        shown = "; ".join(self.violations[:20])
        more = len(self.violations) - 20
        if more > 0:
            shown += f"; ... ({more} more)"
        super().__init__(f"invalid market: {shown}")


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Market:
    """Immutable market instance.

    Attributes:
        proposer_login: login rate of each proposer, shape (I,).
        receiver_login: login rate of each receiver, shape (J,).
        proposer: proposer index of each eligible pair, shape (P,).
        receiver: receiver index of each eligible pair, shape (P,).
        like: like rate of each pair (proposer -> receiver).
        relike: relike rate of each pair (receiver -> proposer).
        capacity: cognitive capacity of each proposer, shape (I,).
    """

    proposer_login: np.ndarray
    receiver_login: np.ndarray
    proposer: np.ndarray
    receiver: np.ndarray
    like: np.ndarray
    relike: np.ndarray
    capacity: np.ndarray

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "proposer_login", _frozen(self.proposer_login, np.float64))
        set_(self, "receiver_login", _frozen(self.receiver_login, np.float64))
        set_(self, "proposer", _frozen(self.proposer, np.int32))
        set_(self, "receiver", _frozen(self.receiver, np.int32))
        set_(self, "like", _frozen(self.like, np.float64))
        set_(self, "relike", _frozen(self.relike, np.float64))
        cap = np.broadcast_to(np.asarray(self.capacity), self.proposer_login.shape)
        set_(self, "capacity", _frozen(cap, np.int64))
        n = len(self.proposer)
        for name in ("receiver", "like", "relike"):
            if len(getattr(self, name)) != n:
                raise MarketValidationError([f"pair column {name} has length {len(getattr(self, name))}, expected {n}"])

    @property
    def n_proposers(self) -> int:
        return len(self.proposer_login)

    @property
    def n_receivers(self) -> int:
        return len(self.receiver_login)

    @property
    def n_pairs(self) -> int:
        return len(self.proposer)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_proposers, self.n_receivers

    @cached_property
    def dating_rates(self) -> np.ndarray:
        """delta_ij = ((lambda_i * alpha_ij) * lambda_j) * beta_ij for every pair."""
        d = self.proposer_login[self.proposer] * self.like
        d *= self.receiver_login[self.receiver]
        d *= self.relike
        d.setflags(write=False)
        return d

    @cached_property
    def like_exposure(self) -> np.ndarray:
        """Expected likes sent over each pair if shown: lambda_i * alpha_ij."""
        w = self.proposer_login[self.proposer] * self.like
        w.setflags(write=False)
        return w

    @cached_property
    def pairs_in_row_major_order(self) -> bool:
        if self.n_pairs < 2:
            return True
        key = self.proposer.astype(np.int64) * self.n_receivers + self.receiver
        return bool(np.all(key[1:] > key[:-1]))

    @cached_property
    def greedy_order(self) -> np.ndarray:
        """Pair indices by descending dating rate, ties by proposer then receiver index."""
        neg = -self.dating_rates
        if self.pairs_in_row_major_order:
            order = np.argsort(neg, kind="stable")
        else:
            order = np.lexsort((self.receiver, self.proposer, neg))
        order.setflags(write=False)
        return order

    def dense(self, values: np.ndarray) -> np.ndarray:
        """Scatter a per-pair vector into a dense I x J array (zeros off the pair list)."""
        out = np.zeros(self.shape)
        out[self.proposer, self.receiver] = values
        return out

    @classmethod
    def from_dense(cls, proposer_login, receiver_login, like, relike, capacity, eligible=None) -> "Market":
        """Build a market from dense I x J rate matrices; ``eligible`` masks the pair list."""
        like = np.asarray(like, dtype=np.float64)
        relike = np.asarray(relike, dtype=np.float64)
        mask = np.ones(like.shape, dtype=bool) if eligible is None else np.asarray(eligible, dtype=bool)
        pi, pj = np.nonzero(mask)
        return cls(
            proposer_login=proposer_login,
            receiver_login=receiver_login,
            proposer=pi,
            receiver=pj,
            like=like[pi, pj],
            relike=relike[pi, pj],
            capacity=capacity,
        )


def dating_rate(login_p: float, like: float, login_r: float, relike: float) -> float:
    """Probability that a single recommendation turns into a date."""
    for name, v in (("login_p", login_p), ("like", like), ("login_r", login_r), ("relike", relike)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v!r} outside [0, 1]")
    return ((login_p * like) * login_r) * relike


def _range_violations(label: str, values: np.ndarray, describe) -> list[str]:
    bad = np.flatnonzero(~((values >= 0.0) & (values <= 1.0)))
    return [f"{describe(int(k))}: {label}={float(values[k])!r} outside [0, 1]" for k in bad]


def validate_market(market: Market) -> Market:
    """Return ``market`` unchanged or raise :class:`MarketValidationError` listing every violation."""
    errors: list[str] = []
    I, J = market.shape
    if I == 0:
        errors.append("no proposers")
    if J == 0:
        errors.append("no receivers")
    errors += _range_violations("lambda", market.proposer_login, lambda k: f"proposer {k}")
    errors += _range_violations("lambda", market.receiver_login, lambda k: f"receiver {k}")

    pi, pj = market.proposer, market.receiver
    idx_ok = (pi >= 0) & (pi < I) & (pj >= 0) & (pj < J)
    for k in np.flatnonzero(~idx_ok):
        errors.append(f"pair {k}: index ({pi[k]},{pj[k]}) outside {I}x{J} market")

    def pair_name(k: int) -> str:
        return f"pair ({pi[k]},{pj[k]})"

    errors += _range_violations("alpha", market.like, pair_name)
    errors += _range_violations("beta", market.relike, pair_name)

    for k in np.flatnonzero(market.capacity < 1):
        errors.append(f"proposer {k}: capacity {market.capacity[k]} < 1")

    if market.n_pairs and idx_ok.all():
        key = pi.astype(np.int64) * J + pj
        uniq, counts = np.unique(key, return_counts=True)
        for u in uniq[counts > 1]:
            errors.append(f"duplicate pair ({u // J},{u % J})")

    if errors:
        raise MarketValidationError(errors)
    return market


@dataclass(frozen=True, eq=False)
class RankOrderLists:
    """Rank-order lists in compressed form.

    ``proposer_pairs[proposer_ptr[i]:proposer_ptr[i+1]]`` are the pair indices on
    proposer i's list, best first; likewise for receivers. ``proposer_rank[p]``
    and ``receiver_rank[p]`` give the position of pair p on each side's list.
    """

    sort_kind: SortKind
    proposer_pairs: np.ndarray
    proposer_ptr: np.ndarray
    receiver_pairs: np.ndarray
    receiver_ptr: np.ndarray
    proposer_rank: np.ndarray
    receiver_rank: np.ndarray
    proposer_key: np.ndarray
    receiver_key: np.ndarray

    def proposer_list(self, market: Market, i: int) -> list[int]:
        seg = self.proposer_pairs[self.proposer_ptr[i] : self.proposer_ptr[i + 1]]
        return market.receiver[seg].tolist()

    def receiver_list(self, market: Market, j: int) -> list[int]:
        seg = self.receiver_pairs[self.receiver_ptr[j] : self.receiver_ptr[j + 1]]
        return market.proposer[seg].tolist()


def _grouped_order(group: np.ndarray, counterpart: np.ndarray, key: np.ndarray, n_groups: int):
    order = np.lexsort((counterpart, -key, group))
    counts = np.bincount(group, minlength=n_groups)
    ptr = np.zeros(n_groups + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order)) - ptr[group[order]]
    return order, ptr, rank


def build_rols(market: Market, sort_kind: SortKind | str) -> RankOrderLists:
    """Rank-order lists for both sides.

    LIKE: proposers rank by like rate, receivers by relike rate.
    DATE: both sides rank by the dating rate. Ties go to the lower counterpart index.
    """
    sort_kind = SortKind(sort_kind)
    if sort_kind is SortKind.LIKE:
        pkey, rkey = market.like, market.relike
    else:
        pkey = rkey = market.dating_rates
    p_order, p_ptr, p_rank = _grouped_order(market.proposer, market.receiver, pkey, market.n_proposers)
    r_order, r_ptr, r_rank = _grouped_order(market.receiver, market.proposer, rkey, market.n_receivers)
    arrays = dict(
        proposer_pairs=p_order,
        proposer_ptr=p_ptr,
        receiver_pairs=r_order,
        receiver_ptr=r_ptr,
        proposer_rank=p_rank,
        receiver_rank=r_rank,
        proposer_key=np.asarray(pkey),
        receiver_key=np.asarray(rkey),
    )
    for a in arrays.values():
        a.setflags(write=False)
    return RankOrderLists(sort_kind=sort_kind, **arrays)


# ---------------------------------------------------------------------------
# CSV interchange

PAIR_HEADER = ["proposer_id", "receiver_id", "lambda_p", "alpha", "lambda_r", "beta"]
CAPACITY_HEADER = ["proposer_id", "capacity"]


def read_market_csv(path, capacities=None, default_capacity: int = 25) -> Market:
    """Load a market from the pair CSV (and optional capacities CSV).

    User ids are the integer ids in the file; the market spans 0..max id on each side.
    Login rates must agree across all rows of the same user.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PAIR_HEADER:
            raise MarketValidationError([f"{path}: header must be {','.join(PAIR_HEADER)}"])
        rows = [r for r in reader if r]
    errors: list[str] = []
    if not rows:
        raise MarketValidationError([f"{path}: no pairs"])
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise MarketValidationError([f"{path}: non-numeric field ({exc})"]) from None
    pi = data[:, 0].astype(np.int64)
    pj = data[:, 1].astype(np.int64)
    if np.any(pi != data[:, 0]) or np.any(pj != data[:, 1]) or pi.min() < 0 or pj.min() < 0:
        raise MarketValidationError([f"{path}: ids must be nonnegative integers"])
    I, J = int(pi.max()) + 1, int(pj.max()) + 1

    def side_login(ids, values, n, side):
        login = np.full(n, np.nan)
        for uid, v in zip(ids.tolist(), values.tolist()):
            if np.isnan(login[uid]):
                login[uid] = v
            elif login[uid] != v:
                errors.append(f"{side} {uid}: inconsistent login rate ({login[uid]!r} vs {v!r})")
        # users without pairs are simply never logged in anywhere; rate 0 keeps them inert
        login[np.isnan(login)] = 0.0
        return login

    lp = side_login(pi, data[:, 2], I, "proposer")
    lr = side_login(pj, data[:, 4], J, "receiver")
    cap = np.full(I, default_capacity, dtype=np.int64)
    if capacities is not None:
        with open(capacities, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != CAPACITY_HEADER:
                raise MarketValidationError([f"{capacities}: header must be {','.join(CAPACITY_HEADER)}"])
            for row in reader:
                if not row:
                    continue
                uid, c = int(row[0]), float(row[1])
                if not 0 <= uid < I:
                    errors.append(f"capacities: proposer {uid} not in market")
                elif c != int(c):
                    errors.append(f"capacities: proposer {uid} capacity {c} not an integer")
                else:
                    cap[uid] = int(c)
    if errors:
        raise MarketValidationError(errors)
    market = Market(lp, lr, pi, pj, data[:, 3], data[:, 5], cap)
    return validate_market(market)


def write_market_csv(market: Market, path, capacities=None) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PAIR_HEADER)
        lp, lr = market.proposer_login, market.receiver_login
        for i, j, a, b in zip(market.proposer.tolist(), market.receiver.tolist(), market.like.tolist(), market.relike.tolist()):
            w.writerow([i, j, repr(lp[i].item()), repr(a), repr(lr[j].item()), repr(b)])
    if capacities is not None:
        with open(capacities, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CAPACITY_HEADER)
            for i, c in enumerate(market.capacity.tolist()):
                w.writerow([i, c])
