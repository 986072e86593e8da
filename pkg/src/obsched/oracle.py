"""Brute-force verification: discretized value iteration and property suites.

The price-parameterized single-arm dynamic program

    V(x; nu) = min_a { nu c(a) + C(x) + beta V(phi_a(x); nu) }

is solved on a grid by fixed-point iteration with linear interpolation of
continuation values.  The module also extracts threshold structure from DP
solutions, aggregates the partial-conservation-law property checks, and
verifies the majorisation inequality used by the monotonicity argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .costs import CostFn
from .dynamics import ArmParams, phi0, phi1, y0, y1
from .index import (
    IndexQuery,
    _marginal_sums_batch,
    truncation_horizon,
    whittle_index,
)


@dataclass(frozen=True)
class DPGrid:
    """State grid for value iteration; off-grid images clamp and interpolate."""

    lo: float
    hi: float
    n: int = 4096
    spacing: str = "log"

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.n < 64:
            raise ValueError(f"grid needs at least 64 points, got {self.n}")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"unknown spacing {self.spacing!r}")
        if self.spacing == "log" and self.lo <= 0:
            raise ValueError("log spacing requires lo > 0")

    def points(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.lo, self.hi, self.n)
        return np.linspace(self.lo, self.hi, self.n)


def default_grid(params: ArmParams, n: int = 4096) -> DPGrid:
    """Log grid on [1e-4 y_1, 4 y_0]; variance dynamics are multiplicative
    near zero and saturate near the passive fixed point."""
    top = y0(params)
    bottom = y1(params)
    if not math.isfinite(top):
        raise ValueError("passive fixed point is infinite; supply explicit bounds")
    if bottom <= 0.0:
        bottom = min(1.0, top) * 1e-3
    return DPGrid(1e-4 * bottom, 4.0 * top, n)


@dataclass(frozen=True)
class DPSolution:
    grid: DPGrid
    nu: float
    values: np.ndarray
    actions: np.ndarray
    iterations: int
    residual: float


def value_iteration(
    params: ArmParams,
    cost: CostFn,
    beta: float,
    nu: float,
    grid: DPGrid,
    tol: float = 1e-9,
    max_iter: int = 2_000_000,
) -> DPSolution:
    """Solve the nu-priced DP by contraction iteration on the grid.

    Stops when the sup-norm change is below tol (1 - beta) / (2 beta),
    which makes the value error at most tol; greedy actions break exact
    ties in favour of observing.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    pts = grid.points()
    stage = cost.eval(pts)
    img0 = np.clip(phi0(params, pts), grid.lo, grid.hi)
    img1 = np.clip(phi1(params, pts), grid.lo, grid.hi)
    idx0 = np.clip(np.searchsorted(pts, img0) - 1, 0, grid.n - 2)
    idx1 = np.clip(np.searchsorted(pts, img1) - 1, 0, grid.n - 2)
    frac0 = (img0 - pts[idx0]) / (pts[idx0 + 1] - pts[idx0])
    frac1 = (img1 - pts[idx1]) / (pts[idx1 + 1] - pts[idx1])
    w0 = nu * params.c0
    w1 = nu * params.c1
    stop = tol if beta == 0.0 else tol * (1.0 - beta) / (2.0 * beta)
    V = np.zeros(grid.n)
    it = 0
    resid = math.inf
    while it < max_iter:
        it += 1
        cont0 = V[idx0] * (1.0 - frac0) + V[idx0 + 1] * frac0
        cont1 = V[idx1] * (1.0 - frac1) + V[idx1 + 1] * frac1
        q0 = w0 + stage + beta * cont0
        q1 = w1 + stage + beta * cont1
        V_new = np.minimum(q0, q1)
        resid = float(np.max(np.abs(V_new - V)))
        V = V_new
        if resid < stop:
            break
    else:
        raise RuntimeError(f"value iteration did not converge in {max_iter} sweeps")
    cont0 = V[idx0] * (1.0 - frac0) + V[idx0 + 1] * frac0
    cont1 = V[idx1] * (1.0 - frac1) + V[idx1 + 1] * frac1
    actions = (w1 + beta * cont1 <= w0 + beta * cont0).astype(np.int64)
    return DPSolution(grid, nu, V, actions, it, resid)


@dataclass(frozen=True)
class ThresholdReport:
    is_threshold: bool
    threshold: float
    switches: int
    switch_positions: tuple[int, ...]


def dp_threshold(sol: DPSolution) -> ThresholdReport:
    """Extract the switch point of a 0-block-then-1-block action array.

    All-passive reports +inf, all-active -inf (the threshold is below the
    grid); anything other than a single upward switch is reported with the
    offending positions.
    """
    acts = sol.actions
    diffs = np.flatnonzero(np.diff(acts) != 0)
    if len(diffs) == 0:
        thr = -math.inf if acts[0] == 1 else math.inf
        return ThresholdReport(True, thr, 0, ())
    if len(diffs) == 1 and acts[0] == 0 and acts[-1] == 1:
        k = int(diffs[0]) + 1
        return ThresholdReport(True, float(sol.grid.points()[k]), 1, (k,))
    return ThresholdReport(False, math.nan, len(diffs), tuple(int(d) + 1 for d in diffs))


@dataclass(frozen=True)
class MajorisationResult:
    hypotheses_ok: bool
    hypothesis_failures: tuple[str, ...]
    holds: bool
    lhs: float
    rhs: float


def majorisation_check(
    a_seq: Sequence[float],
    b_seq: Sequence[float],
    f_family: Sequence[Callable[[np.ndarray], np.ndarray]],
    probe_points: Optional[np.ndarray] = None,
) -> MajorisationResult:
    """Check sum f_i(a_i) >= sum f_i(b_i) together with its hypotheses.

    Hypotheses verified numerically: both sequences non-decreasing and
    positive, prefix sums of a dominated by those of b, each f_i
    non-increasing and convex on a probe grid, and consecutive differences
    f_{i-1} - f_i non-increasing.  Hypothesis violations are reported
    separately from failure of the conclusion.
    """
    a = np.asarray(a_seq, dtype=float)
    b = np.asarray(b_seq, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) != len(f_family):
        raise ValueError("sequences and function family must have equal length")
    failures: list[str] = []
    if np.any(a <= 0) or np.any(b <= 0):
        failures.append("sequences not positive")
    if np.any(np.diff(a) < 0) or np.any(np.diff(b) < 0):
        failures.append("sequences not non-decreasing")
    if np.any(np.cumsum(a) > np.cumsum(b) + 1e-12 * np.maximum(1, np.cumsum(b))):
        failures.append("prefix sums of a exceed those of b")
    if probe_points is None:
        top = float(max(a.max(), b.max()))
        probe_points = np.geomspace(min(a.min(), b.min()) * 0.5, top * 2.0, 64)
    u = probe_points
    for i, f in enumerate(f_family):
        vals = np.asarray(f(u), dtype=float)
        if np.any(np.diff(vals) > 1e-12 * np.maximum(1, np.abs(vals[:-1]))):
            failures.append(f"f_{i + 1} not non-increasing")
        if np.any(np.diff(vals, 2) < -1e-10 * np.maximum(1, np.abs(vals[1:-1]))):
            failures.append(f"f_{i + 1} not convex on probe grid")
    for i in range(1, len(f_family)):
        gap = np.asarray(f_family[i - 1](u), dtype=float) - np.asarray(
            f_family[i](u), dtype=float
        )
        if np.any(np.diff(gap) > 1e-10 * np.maximum(1, np.abs(gap[:-1]))):
            failures.append(f"f_{i} - f_{i + 1} not non-increasing")
    lhs = float(sum(float(f(np.array([ai]))[0]) for f, ai in zip(f_family, a)))
    rhs = float(sum(float(f(np.array([bi]))[0]) for f, bi in zip(f_family, b)))
    return MajorisationResult(
        hypotheses_ok=not failures,
        hypothesis_failures=tuple(failures),
        holds=lhs >= rhs - 1e-10 * max(1.0, abs(rhs)),
        lhs=lhs,
        rhs=rhs,
    )


@dataclass(frozen=True)
class PcliConfig:
    seed: int = 20260810
    work_samples: int = 200
    lambda_points: int = 400
    sweep_points: int = 1500
    itinerary_lengths: tuple[int, ...] = (2, 4, 8, 16, 32)
    pcli3_intervals: int = 3
    eps: float = 1e-12
    state_lo: Optional[float] = None
    state_hi: Optional[float] = None
    slope_limit: float = 4.5


def _state_bounds(params: ArmParams, cfg: PcliConfig) -> tuple[float, float]:
    lo = cfg.state_lo
    hi = cfg.state_hi
    if lo is None:
        bottom = y1(params)
        lo = max(1e-3, 0.25 * bottom) if bottom > 0 else 1e-3
    if hi is None:
        top = y0(params)
        hi = 2.0 * top if math.isfinite(top) else 50.0
    return float(lo), float(hi)


def pcli_report(
    params: ArmParams,
    cost: CostFn,
    beta: float,
    config: Optional[PcliConfig] = None,
) -> dict:
    """Run the partial-conservation-law property suite; findings are data.

    Sections: positivity of marginal work with its discounted lower bound,
    monotonicity and a sampled continuity modulus of the index, growth of
    the discontinuity count of finite itineraries in the threshold, and
    spot checks of the discrete-measure identity relating marginal cost to
    index-weighted marginal-work jumps.
    """
    cfg = config or PcliConfig()
    rng = np.random.default_rng(cfg.seed)
    lo, hi = _state_bounds(params, cfg)
    T = truncation_horizon(beta, cfg.eps)
    p = params
    report: dict = {"params": {"r": p.r, "a0": p.a0, "a1": p.a1, "beta": beta,
                               "cost": cost.kind, "condition_c": cost.condition_c}}

    # PCLI1: marginal work at s = x stays above its discounted lower bound.
    xs = rng.uniform(lo, hi, cfg.work_samples)
    _, work, _ = _marginal_sums_batch(
        p.r, p.a0, p.a1, p.c0, p.c1, beta, cost, xs, xs, T
    )
    slack = (p.c1 - p.c0) * beta ** (T + 1) / max(1e-300, 1.0 - beta)
    bound = (1.0 - beta) * (p.c1 - p.c0) - slack
    margin = float(np.min(work - bound))
    report["pcli1"] = {
        "samples": cfg.work_samples,
        "bound": bound,
        "min_margin": margin,
        "ok": bool(margin >= -1e-9),
    }

    # PCLI2: non-decreasing index and a sampled continuity modulus.
    grid = np.geomspace(lo, hi, cfg.lambda_points)
    num, den, _ = _marginal_sums_batch(
        p.r, p.a0, p.a1, p.c0, p.c1, beta, cost, grid, grid, T
    )
    lam = num / den
    dlam = np.diff(lam)
    tol = 1e-9 + beta ** (T + 1) / (1.0 - beta) if beta > 0 else 1e-9
    violations = int(np.sum(dlam < -tol))
    worst = float(np.min(dlam)) if len(dlam) else 0.0
    modulus = float(np.max(np.abs(dlam) / np.diff(grid)))
    report["pcli2"] = {
        "grid_points": cfg.lambda_points,
        "violations": violations,
        "worst_decrease": worst,
        "max_slope_sampled": modulus,
        "ok": violations == 0,
    }

    # Piecewise constancy: discontinuities of s -> actions grow polynomially.
    x_probe = float(rng.uniform(lo, hi))
    sweep = np.linspace(lo, hi, cfg.sweep_points)
    counts = []
    for t_len in cfg.itinerary_lengths:
        acts = _action_matrix(p, x_probe, sweep, t_len)
        changed = np.any(acts[:, 1:] != acts[:, :-1], axis=0)
        counts.append(int(np.sum(changed)))
    tlog = np.log(np.asarray(cfg.itinerary_lengths, dtype=float))
    clog = np.log(np.maximum(1.0, np.asarray(counts, dtype=float)))
    slope = float(np.polyfit(tlog, clog, 1)[0])
    report["discontinuities"] = {
        "lengths": list(cfg.itinerary_lengths),
        "counts": counts,
        "fitted_exponent": slope,
        "ok": bool(slope <= cfg.slope_limit),
    }

    # PCLI3: c_x(b) - c_x(a) equals the index-weighted sum of work jumps.
    checks = []
    for _ in range(cfg.pcli3_intervals):
        a_s, b_s = np.sort(rng.uniform(lo, hi, 2))
        if b_s - a_s < 0.05 * (hi - lo):
            b_s = min(hi, a_s + 0.05 * (hi - lo))
        svals = np.linspace(a_s, b_s, cfg.sweep_points)
        x_arr = np.full_like(svals, x_probe)
        mcost, mwork, _ = _marginal_sums_batch(
            p.r, p.a0, p.a1, p.c0, p.c1, beta, cost, x_arr, svals, T
        )
        lam_s = _lambda_on(p, cost, beta, svals, T)
        dw = np.diff(mwork)
        lhs = float(mcost[-1] - mcost[0])
        rhs = float(np.sum(lam_s[:-1] * dw))
        scale = max(1.0, abs(lhs), abs(rhs))
        checks.append(
            {"a": float(a_s), "b": float(b_s), "lhs": lhs, "rhs": rhs,
             "rel_err": abs(lhs - rhs) / scale}
        )
    rel_tol = 2e-2
    report["pcli3"] = {
        "checks": checks,
        "rel_tol": rel_tol,
        "ok": bool(all(c["rel_err"] <= rel_tol for c in checks)),
    }

    report["ok"] = bool(
        report["pcli1"]["ok"]
        and report["pcli2"]["ok"]
        and report["discontinuities"]["ok"]
        and report["pcli3"]["ok"]
    )
    return report


def _lambda_on(
    p: ArmParams, cost: CostFn, beta: float, xs: np.ndarray, T: int
) -> np.ndarray:
    num, den, _ = _marginal_sums_batch(
        p.r, p.a0, p.a1, p.c0, p.c1, beta, cost, xs, xs, T
    )
    return num / den


def _action_matrix(
    p: ArmParams, x: float, thresholds: np.ndarray, t_len: int
) -> np.ndarray:
    """Actions A_{1:t}(x, a0-free; s) for every threshold in the sweep."""
    v = np.full_like(thresholds, x)
    acts = np.empty((t_len, len(thresholds)), dtype=np.int8)
    r2 = p.r2
    for t in range(t_len):
        a = v >= thresholds
        acts[t] = a
        img0 = (r2 * v + 1.0) / (p.a0 * r2 * v + p.a0 + 1.0)
        if math.isinf(p.a1):
            img1 = np.zeros_like(v)
        else:
            img1 = (r2 * v + 1.0) / (p.a1 * r2 * v + p.a1 + 1.0)
        v = np.where(a, img1, img0)
    return acts


@dataclass(frozen=True)
class CrossValidation:
    """One oracle-vs-index comparison at a price straddling lambda(x*)."""

    x_star: float
    lam: float
    delta: float
    action_above: int
    action_below: int
    threshold_ok: bool
    dp_threshold_above: float
    dp_threshold_below: float


def cross_validate(
    params: ArmParams,
    cost: CostFn,
    beta: float,
    x_star: float,
    grid: Optional[DPGrid] = None,
    tol: float = 1e-9,
) -> CrossValidation:
    """Set nu = lambda(x*) +/- delta and confirm the DP flips the action at x*.

    delta is ten grid cells of index variation, estimated from a local
    finite difference; both DP solutions must be threshold policies.
    """
    g = grid or default_grid(params, n=2048)
    rec = whittle_index(IndexQuery(params, cost, beta, x_star))
    pts = g.points()
    k = int(np.searchsorted(pts, x_star))
    k = min(max(k, 1), g.n - 2)
    cell = pts[k + 1] - pts[k]
    h = max(cell, 1e-6 * (1.0 + abs(x_star)))
    lam_hi = whittle_index(IndexQuery(params, cost, beta, x_star + h)).lam
    lam_lo = whittle_index(IndexQuery(params, cost, beta, max(g.lo, x_star - h))).lam
    slope = abs(lam_hi - lam_lo) / (2.0 * h)
    delta = max(10.0 * cell * slope, 1e-6 * max(1.0, abs(rec.lam)))
    sols = {}
    for sign in (+1, -1):
        sols[sign] = value_iteration(
            params, cost, beta, rec.lam + sign * delta, g, tol=tol
        )
    above = dp_threshold(sols[+1])
    below = dp_threshold(sols[-1])
    return CrossValidation(
        x_star=x_star,
        lam=rec.lam,
        delta=delta,
        action_above=int(sols[+1].actions[k]),
        action_below=int(sols[-1].actions[k]),
        threshold_ok=above.is_threshold and below.is_threshold,
        dp_threshold_above=above.threshold,
        dp_threshold_below=below.threshold,
    )
