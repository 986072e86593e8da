"""Marginal cost, marginal work and the Whittle (marginal-productivity) index.

The index at state x is the ratio of the discounted uncertainty-cost
difference to the discounted observation-effort difference between the two
forced-first-action variants of the x-threshold policy, both sums
truncated at the same horizon T.  Also: closed forms for the noiseless
case, the discount-to-one limit, Q-values of threshold policies, and grid
tabulation with monotonicity accounting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .costs import CostFn
from .dynamics import (
    KNIFE_EDGE_TOL,
    ArmParams,
    ThresholdWord,
    is_knife_edge,
    phi,
    threshold_word,
)
from .words import Word, is_balanced

MAX_TRUNCATION_STEPS = 5_000_000
BETA_LIMIT_WARN = 0.999


class UncertifiedPeriodError(RuntimeError):
    """The threshold word at x could not be certified periodic."""


def truncation_horizon(beta: float, eps: float) -> int:
    """T with beta^T <= eps, capped; one term suffices at beta = 0."""
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    if beta == 0.0:
        return 1
    return min(MAX_TRUNCATION_STEPS, max(1, math.ceil(math.log(eps) / math.log(beta))))


@dataclass(frozen=True)
class IndexQuery:
    params: ArmParams
    cost: CostFn
    beta: float
    x: float
    T: Optional[int] = None
    eps: float = 1e-12

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if self.T is not None and self.T < 1:
            raise ValueError("T must be positive")

    @property
    def horizon(self) -> int:
        if self.T is not None:
            return self.T
        return truncation_horizon(self.beta, self.eps)


@dataclass(frozen=True)
class IndexRecord:
    x: float
    lam: float
    numerator: float
    denominator: float
    word: Optional[Word]
    periodic: bool
    knife_edge: bool


def _knife_branch(p: ArmParams, s: float, v: float, recent: list[int]) -> int:
    """Resolve a threshold tie: keep the branch whose short continuation is balanced.

    Each branch takes its action, then follows the threshold rule for three
    more steps; the branch whose recent action window stays 1-balanced wins,
    with the active (>=) convention breaking residual ties.
    """
    windows = {}
    for first in (1, 0):
        acts = [first]
        u = phi(p, first, v)
        for _ in range(3):
            b = int(u >= s)
            acts.append(b)
            u = phi(p, b, u)
        windows[first] = is_balanced(Word(recent[-16:] + acts))
    if windows[1] == windows[0]:
        return 1
    return 1 if windows[1] else 0


def _orbit_sums(
    p: ArmParams,
    cost: CostFn,
    beta: float,
    x: float,
    s: float,
    first_action: int,
    T: int,
) -> tuple[float, float, bool]:
    """Discounted cost and work sums of one forced-first-action orbit.

    Threshold ties within the knife-edge tolerance are resolved by
    :func:`_knife_branch` and flagged.
    """
    v = float(x)
    disc = 1.0
    cost_sum = 0.0
    work_sum = 0.0
    knife = False
    acts: list[int] = []
    for t in range(T + 1):
        if t == 0:
            act = first_action
        elif is_knife_edge(v, s):
            knife = True
            act = _knife_branch(p, s, v, acts)
        else:
            act = int(v >= s)
        cost_sum += disc * cost.eval(v)
        work_sum += disc * p.work_cost(act)
        acts.append(act)
        v = phi(p, act, v)
        disc *= beta
    return cost_sum, work_sum, knife


def marginal_cost(q: IndexQuery, s: float) -> float:
    """Discounted uncertainty-cost surplus of starting passive over active."""
    T = q.horizon
    c0, _, _ = _orbit_sums(q.params, q.cost, q.beta, q.x, s, 0, T)
    c1, _, _ = _orbit_sums(q.params, q.cost, q.beta, q.x, s, 1, T)
    return c0 - c1


def marginal_work(q: IndexQuery, s: float) -> float:
    """Discounted observation-effort surplus of starting active over passive."""
    T = q.horizon
    _, w0, _ = _orbit_sums(q.params, q.cost, q.beta, q.x, s, 0, T)
    _, w1, _ = _orbit_sums(q.params, q.cost, q.beta, q.x, s, 1, T)
    return w1 - w0


def whittle_index(q: IndexQuery, word_max_len: int = 64) -> IndexRecord:
    """Truncated-sum approximation of the Whittle index at q.x.

    Both marginal sums share the same horizon; the certified threshold word
    at x (when one exists within ``word_max_len``) is attached to the
    record, and iterates tying the threshold set the knife-edge flag.
    """
    if q.beta > BETA_LIMIT_WARN:
        warnings.warn(
            f"beta={q.beta} needs ~{q.horizon} terms; consider index_beta1",
            RuntimeWarning,
            stacklevel=2,
        )
    T = q.horizon
    c0, w0, k0 = _orbit_sums(q.params, q.cost, q.beta, q.x, q.x, 0, T)
    c1, w1, k1 = _orbit_sums(q.params, q.cost, q.beta, q.x, q.x, 1, T)
    num = c0 - c1
    den = w1 - w0
    gap = q.params.c1 - q.params.c0
    slack = gap * q.beta ** (T + 1) / max(1e-300, 1.0 - q.beta)
    if den <= 0.0 or den < (1.0 - q.beta) * gap - slack - 1e-15:
        raise ArithmeticError(
            f"marginal work {den} below its lower bound at x={q.x}:"
            " internal inconsistency"
        )
    tw = threshold_word(q.params, q.x, word_max_len)
    return IndexRecord(
        x=q.x,
        lam=num / den,
        numerator=num,
        denominator=den,
        word=tw.word if tw.periodic else None,
        periodic=tw.periodic,
        knife_edge=k0 or k1 or tw.knife_edge,
    )


def whittle_index_word(
    params: ArmParams, cost: CostFn, beta: float, x: float, word: Word, T: int
) -> tuple[float, float]:
    """(numerator, denominator) with actions pinned to the certified word.

    For x inside the word's fixed-point interval the passive-start variant
    follows (01p)-cycles and the active-start variant (10p)-cycles, where
    word = 0p1; pinning the actions removes threshold comparisons entirely,
    which is the knife-edge-proof evaluation path.
    """
    n = len(word)
    if n == 1:
        seq0 = [0] + [word.letter(1)] * (T + 1)
        seq1 = [1] + [word.letter(1)] * (T + 1)
    else:
        p = word.factor(2, n - 1)
        w01 = Word("01") + p
        w10 = Word("10") + p
        reps = T // n + 2
        seq0 = list(w01 * reps)
        seq1 = list(w10 * reps)
    num = 0.0
    den = 0.0
    v0 = v1 = float(x)
    disc = 1.0
    for t in range(T + 1):
        num += disc * (cost.eval(v0) - cost.eval(v1))
        den += disc * (params.work_cost(seq1[t]) - params.work_cost(seq0[t]))
        v0 = phi(params, seq0[t], v0)
        v1 = phi(params, seq1[t], v1)
        disc *= beta
    return num, den


def q_value(
    params: ArmParams,
    cost: CostFn,
    beta: float,
    nu: float,
    x: float,
    a: int,
    s: float,
    T: int,
) -> float:
    """Discounted cost-to-go plus nu-priced work of the s-threshold policy."""
    csum, wsum, _ = _orbit_sums(params, cost, beta, x, s, a, T)
    return csum + nu * wsum


def closed_form_noiseless(r: float, beta: float, x: float) -> float:
    """Whittle index for linear cost, uninformative passive and noiseless
    active observations, where the passive map is v -> r*v + 1.

    The geometric-sum expression is scaled by beta so that it agrees with
    the defining marginal-cost/marginal-work ratio (and hence with the
    dynamic-programming indifference price); see the decisions ledger.
    """
    if not 0.0 <= r < 1.0:
        raise ValueError(f"r must be in [0, 1), got {r}")
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    if not 0.0 <= x < 1.0 / (1.0 - r):
        raise ValueError(f"x={x} outside [0, {1.0 / (1.0 - r)})")
    if x == 0.0:
        n = 0
    elif r == 0.0:
        n = 1
    else:
        n = max(0, math.ceil(math.log1p(-(1.0 - r) * x) / math.log(r)))
    lead = (1.0 - beta ** (n + 1)) / (1.0 - beta)
    if n == 0:
        inner = r * x + 1.0
    else:
        geo = (1.0 - (beta * r) ** n) / (1.0 - beta * r)
        tail = beta**n * (1.0 - r**n) / (1.0 - r)
        inner = r * x + 1.0 - beta / (1.0 - beta ** (n + 1)) * (geo - tail)
    return beta * lead * inner


def closed_form_noiseless_limit(x: float) -> float:
    """The (beta -> 1, r -> 1) limit: ceil(x+1) * (x + 1 - ceil(x)/2)."""
    if x < 0.0:
        raise ValueError("x must be non-negative")
    return math.ceil(x + 1.0) * (x + 1.0 - math.ceil(x) / 2.0)


def index_beta1(
    params: ArmParams, cost: CostFn, x: float, T: int, word_max_len: int = 256
) -> float:
    """Discount-to-one limit of the index at x.

    Requires a certified periodic threshold word of period n; the limit
    denominator is 1/n and the limit numerator telescopes the two orbits
    against their limit cycles, approximating the cycle by late iterates.
    """
    tw: ThresholdWord = threshold_word(params, x, word_max_len)
    if not tw.periodic:
        raise UncertifiedPeriodError(
            f"no certified period <= {word_max_len} at x={x}"
        )
    n = len(tw.word)
    if n > T:
        raise UncertifiedPeriodError(f"period {n} exceeds horizon T={T}")
    steps = T * n
    states = {}
    for first in (0, 1):
        v = float(x)
        traj = np.empty(steps)
        for t in range(steps):
            traj[t] = v
            act = first if t == 0 else int(v >= x)
            v = phi(params, act, v)
        states[first] = traj
    cyc0 = cost.eval(states[0][steps - n : steps])
    cyc1 = cost.eval(states[1][steps - n : steps])
    offsets = np.arange(steps) % n
    c0 = cost.eval(states[0])
    c1 = cost.eval(states[1])
    numerator = float(np.sum(c0 - cyc0[offsets] - c1 + cyc1[offsets]))
    t_head = np.arange(n)
    numerator += float(np.sum(t_head * (cyc1 - cyc0))) / n
    return numerator * n


# ---------------------------------------------------------------------------
# Vectorized grid evaluation.


def _phi_batch(
    r2: np.ndarray, a0: np.ndarray, a1: np.ndarray, act: np.ndarray, v: np.ndarray
) -> np.ndarray:
    num = r2 * v + 1.0
    img0 = num / (a0 * r2 * v + a0 + 1.0)
    a1_inf = np.isinf(a1)
    a1_safe = np.where(a1_inf, 1.0, a1)
    img1 = np.where(a1_inf, 0.0, num / (a1_safe * r2 * v + a1_safe + 1.0))
    return np.where(act, img1, img0)


def _marginal_sums_batch(
    r: np.ndarray,
    a0: np.ndarray,
    a1: np.ndarray,
    c0: np.ndarray,
    c1: np.ndarray,
    beta: np.ndarray,
    cost: CostFn,
    x: np.ndarray,
    s: np.ndarray,
    T: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Marginal cost, marginal work, knife-edge flags; everything broadcasts.

    Plain >= comparisons decide actions here; points that ever tie a
    threshold are flagged so scalar re-evaluation can arbitrate.
    """
    r, a0, a1, c0, c1, beta, x, s = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (r, a0, a1, c0, c1, beta, x, s))
    )
    r2 = r * r
    tol = np.where(np.isinf(s), -1.0, KNIFE_EDGE_TOL * np.maximum(1.0, np.abs(s)))
    mcost = np.zeros_like(x)
    mwork = np.zeros_like(x)
    knife = np.zeros(x.shape, dtype=bool)
    for first in (0, 1):
        v = x.copy()
        disc = np.ones_like(x)
        sign = 1.0 if first == 0 else -1.0
        for t in range(T + 1):
            if t == 0:
                act = np.full(x.shape, bool(first))
            else:
                act = v >= s
                knife |= np.abs(v - s) <= tol
            mcost += sign * disc * cost.eval(v)
            mwork -= sign * disc * np.where(act, c1, c0)
            v = _phi_batch(r2, a0, a1, act, v)
            disc *= beta
    return mcost, mwork, knife


@dataclass(frozen=True)
class IndexTable:
    records: list[IndexRecord]
    monotonicity_violations: int
    T: int
    tolerance: float


def index_table(
    params: ArmParams,
    cost: CostFn,
    beta: float,
    grid: Sequence[float],
    eps: float = 1e-12,
    words: bool = True,
    word_max_len: int = 64,
) -> IndexTable:
    """Tabulate the index over an ascending state grid.

    Knife-edge points are re-evaluated through the scalar branch-resolving
    path.  Decreases of lambda beyond 1e-9 plus the truncation slack are
    counted as monotonicity violations (admissible costs must produce
    none).
    """
    xs = np.asarray(grid, dtype=float)
    if xs.ndim != 1 or len(xs) == 0:
        raise ValueError("grid must be a non-empty 1-d sequence")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("grid must be strictly ascending")
    p = params
    T = truncation_horizon(beta, eps)
    num, den, knife = _marginal_sums_batch(
        p.r, p.a0, p.a1, p.c0, p.c1, beta, cost, xs, xs, T
    )
    lam = num / den
    records: list[IndexRecord] = []
    for i, x in enumerate(xs):
        if knife[i]:
            rec = whittle_index(
                IndexQuery(p, cost, beta, float(x), T=T), word_max_len=word_max_len
            )
        else:
            word = None
            periodic = False
            if words:
                tw = threshold_word(p, float(x), word_max_len)
                word, periodic = (tw.word if tw.periodic else None), tw.periodic
            rec = IndexRecord(
                x=float(x),
                lam=float(lam[i]),
                numerator=float(num[i]),
                denominator=float(den[i]),
                word=word,
                periodic=periodic,
                knife_edge=False,
            )
        records.append(rec)
    slack = _lambda_slack(p, beta, T, records)
    lams = np.array([rec.lam for rec in records])
    tol = 1e-9 + slack
    violations = int(np.sum(np.diff(lams) < -tol))
    return IndexTable(records, violations, T, tol)


def _lambda_slack(
    p: ArmParams, beta: float, T: int, records: list[IndexRecord]
) -> float:
    """Bound on the index perturbation caused by truncating both sums at T."""
    if beta == 0.0:
        return 0.0
    tail = beta ** (T + 1) / (1.0 - beta)
    den_min = min(rec.denominator for rec in records)
    num_scale = max(1.0, (1.0 - beta) * max(abs(rec.numerator) for rec in records))
    lam_max = max(abs(rec.lam) for rec in records)
    return tail * (num_scale + lam_max * (p.c1 - p.c0)) / den_min
