"""Multi-arm restless-bandit simulator with index, myopic and baseline policies.

Each arm is an independent Kalman-filtered time series; m arms receive the
expensive observation per round.  Posterior variances evolve
deterministically given the actions, so deterministic policies produce
seed-independent variance trajectories; sampled observations only move the
posterior means.  Randomness comes from one named generator (PCG64) whose
seed sequence is spawned into one child stream per arm plus one stream for
the random policy, in that order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np

from .costs import CostFn, by_name
from .dynamics import ArmParams, phi, phi0, y0
from .index import _marginal_sums_batch, truncation_horizon

POLICIES = ("whittle", "myopic", "round_robin", "random")


@dataclass(frozen=True)
class Arm:
    params: ArmParams
    cost: CostFn
    weight: float = 1.0
    x0: float = 0.0
    v0: float = 1.0

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValueError("arm weight must be positive")
        if self.v0 < 0:
            raise ValueError("initial variance must be non-negative")


@dataclass(frozen=True)
class Scenario:
    arms: tuple[Arm, ...]
    m: int
    beta: float
    horizon: int
    seed: int

    def __post_init__(self) -> None:
        n = len(self.arms)
        if not 1 <= self.m < n:
            raise ValueError(f"need 1 <= m < n arms, got m={self.m}, n={n}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    @classmethod
    def from_json(cls, payload: dict) -> "Scenario":
        """Parse a scenario file; beta and horizon must be explicit."""
        for key in ("arms", "m", "beta", "horizon", "seed"):
            if key not in payload:
                raise ValueError(f"scenario missing required field '{key}'")
        arms = []
        for i, blk in enumerate(payload["arms"]):
            try:
                params = ArmParams(
                    r=float(blk["r"]),
                    a0=float(blk["a0"]),
                    a1=float(blk["a1"]),
                    c0=float(blk.get("c0", 0.0)),
                    c1=float(blk.get("c1", 1.0)),
                )
                cost = by_name(blk.get("cost", "linear"), blk.get("power_q"))
                arms.append(
                    Arm(
                        params=params,
                        cost=cost,
                        weight=float(blk.get("weight", 1.0)),
                        x0=float(blk.get("x0", 0.0)),
                        v0=float(blk["v0"]),
                    )
                )
            except KeyError as exc:
                raise ValueError(f"arm {i} missing required field {exc}") from None
        return cls(
            arms=tuple(arms),
            m=int(payload["m"]),
            beta=float(payload["beta"]),
            horizon=int(payload["horizon"]),
            seed=int(payload["seed"]),
        )


@dataclass
class IndexTables:
    """Per-arm index interpolation tables on log-variance grids."""

    grids: list[np.ndarray]
    values: list[np.ndarray]
    out_of_range: int = 0

    def lookup(self, arm: int, v: float) -> float:
        g = self.grids[arm]
        if v < g[0] or v > g[-1]:
            self.out_of_range += 1
        lv = math.log(max(v, g[0]))
        return float(np.interp(lv, np.log(g), self.values[arm]))


def _reach_bound(p: ArmParams, v0: float, horizon: int) -> float:
    """Upper bound on variances reachable within the horizon under passivity."""
    top = y0(p)
    if math.isfinite(top):
        return max(2.0 * top, 2.0 * v0)
    v = v0
    for _ in range(horizon + 1):
        v = phi0(p, v)
    return 2.0 * max(v, v0, 1.0)


def build_index_tables(
    scenario: Scenario, n_points: int = 512, eps: float = 1e-10
) -> IndexTables:
    """Tabulate weight_i * lambda_i on 512-point log grids, one per arm.

    Identical (params, cost, weight, bounds) arms share a table; the index
    is evaluated with the arm's weighted cost, so weights are baked in.
    """
    grids: list[np.ndarray] = []
    values: list[np.ndarray] = []
    cache: dict = {}
    T = truncation_horizon(scenario.beta, eps)
    for arm in scenario.arms:
        hi = _reach_bound(arm.params, arm.v0, scenario.horizon)
        lo = min(1e-4, 1e-4 * hi)
        key = (arm.params, id(arm.cost), arm.weight, lo, hi)
        if key not in cache:
            g = np.geomspace(lo, hi, n_points)
            # The index prices one unit of activation effort; when the
            # scenario's observation costs coincide they cannot serve as
            # the work scale.
            p = arm.params
            if not p.c1 > p.c0:
                p = p.with_costs(0.0, 1.0)
            wcost = arm.cost.scale(arm.weight)
            num, den, _ = _marginal_sums_batch(
                p.r, p.a0, p.a1, p.c0, p.c1, scenario.beta, wcost, g, g, T
            )
            cache[key] = (g, num / den)
        g, lam = cache[key]
        grids.append(g)
        values.append(lam)
    return IndexTables(grids, values)


@dataclass
class SimTrace:
    """Per-step record of one simulated run."""

    policy: str
    chosen: list[tuple[int, ...]]
    actions: np.ndarray  # (horizon, n)
    variances: np.ndarray  # (horizon + 1, n)
    means: np.ndarray  # (horizon + 1, n)
    inst_cost: np.ndarray  # (horizon,)
    disc_cum_cost: np.ndarray  # (horizon,)
    total_discounted_cost: float
    index_out_of_range: int = 0

    def summary(self) -> dict:
        steps, n = self.actions.shape
        return {
            "policy": self.policy,
            "arms": int(n),
            "horizon": int(steps),
            "total_discounted_cost": float(self.total_discounted_cost),
            "final_variances": [float(v) for v in self.variances[-1]],
            "activations_per_arm": [int(k) for k in self.actions.sum(axis=0)],
            "index_out_of_range": int(self.index_out_of_range),
        }

    def to_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh)
        writer.writerow(["step", "arm", "action", "variance", "inst_cost",
                         "disc_cum_cost"])
        steps, n = self.actions.shape
        for t in range(steps):
            for i in range(n):
                writer.writerow(
                    [
                        t,
                        i + 1,
                        int(self.actions[t, i]),
                        format(self.variances[t, i], ".17g"),
                        format(self.inst_cost[t], ".17g"),
                        format(self.disc_cum_cost[t], ".17g"),
                    ]
                )


def _select_top_m(scores: np.ndarray, m: int) -> tuple[int, ...]:
    """Indices of the m largest scores; ties break toward lower arm id."""
    order = np.lexsort((np.arange(len(scores)), -scores))
    return tuple(sorted(int(i) for i in order[:m]))


def whittle_policy(
    tables: IndexTables, variances: Sequence[float], m: int
) -> tuple[int, ...]:
    """The m arms with the largest interpolated index; ties to lower arm id."""
    scores = np.array([tables.lookup(i, float(v)) for i, v in enumerate(variances)])
    return _select_top_m(scores, m)


def myopic_policy(
    arms: Sequence[Arm], variances: Sequence[float], m: int
) -> tuple[int, ...]:
    """The m arms with the highest current weighted cost; ties to lower arm id."""
    scores = np.array(
        [arm.weight * arm.cost.eval(float(v)) for arm, v in zip(arms, variances)]
    )
    return _select_top_m(scores, m)


def simulate(
    scenario: Scenario,
    policy: str,
    tables: Optional[IndexTables] = None,
) -> SimTrace:
    """Run the belief-state chain under the named policy.

    Exactly m arms are active each round; the trace is bit-reproducible
    for a given seed.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
    n = len(scenario.arms)
    m = scenario.m
    if policy == "whittle" and tables is None:
        tables = build_index_tables(scenario)
    seeds = np.random.SeedSequence(scenario.seed).spawn(n + 1)
    arm_rngs = [np.random.default_rng(s) for s in seeds[:n]]
    policy_rng = np.random.default_rng(seeds[n])

    steps = scenario.horizon
    variances = np.empty((steps + 1, n))
    means = np.empty((steps + 1, n))
    actions = np.zeros((steps, n), dtype=np.int64)
    chosen: list[tuple[int, ...]] = []
    inst = np.empty(steps)
    cum = np.empty(steps)
    variances[0] = [a.v0 for a in scenario.arms]
    means[0] = [a.x0 for a in scenario.arms]
    disc = 1.0
    total = 0.0
    rr_next = 0
    for t in range(steps):
        v = variances[t]
        if policy == "whittle":
            pick = whittle_policy(tables, v, m)
        elif policy == "myopic":
            pick = myopic_policy(scenario.arms, v, m)
        elif policy == "round_robin":
            pick = tuple(sorted((rr_next + j) % n for j in range(m)))
            rr_next = (rr_next + m) % n
        else:
            pick = tuple(sorted(int(i) for i in policy_rng.choice(n, m, replace=False)))
        chosen.append(pick)
        actions[t, list(pick)] = 1
        step_cost = 0.0
        for i, arm in enumerate(scenario.arms):
            act = int(actions[t, i])
            step_cost += arm.weight * arm.cost.eval(v[i]) + arm.params.work_cost(act)
            new_v = phi(arm.params, act, float(v[i]))
            # posterior-mean recursion in process-noise units; the signed
            # multiplier matters for means even though costs only see v
            mult = arm.params.A if arm.params.A is not None else arm.params.r
            innov_var = max(0.0, mult * mult * v[i] + 1.0 - new_v)
            means[t + 1, i] = mult * means[t, i] + math.sqrt(innov_var) * float(
                arm_rngs[i].standard_normal()
            )
            variances[t + 1, i] = new_v
        inst[t] = step_cost
        total += disc * step_cost
        cum[t] = total
        disc *= scenario.beta
    return SimTrace(
        policy=policy,
        chosen=chosen,
        actions=actions,
        variances=variances,
        means=means,
        inst_cost=inst,
        disc_cum_cost=cum,
        total_discounted_cost=total,
        index_out_of_range=tables.out_of_range if tables is not None else 0,
    )


def tournament(
    scenario: Scenario, policies: Sequence[str] = POLICIES
) -> dict[str, SimTrace]:
    """Run several policies on the same scenario, sharing index tables."""
    tables = build_index_tables(scenario) if "whittle" in policies else None
    return {pol: simulate(scenario, pol, tables=tables) for pol in policies}


def fig7_scenario(
    n: int = 10,
    heavy_weight: float = 10.0,
    horizon: int = 200,
    beta: float = 0.99,
    seed: int = 7,
) -> Scenario:
    """Benchmark: n identical arms, one carrying a heavier uncertainty cost.

    All arms start at variance 4 with free observations; only the cost
    ordering whittle < {myopic, round_robin} is meaningful, not magnitudes.
    """
    from .costs import linear

    params = ArmParams(r=1.0, a0=0.0, a1=0.1, c0=0.0, c1=0.0)
    cost = linear()
    arms = tuple(
        Arm(params=params, cost=cost, weight=heavy_weight if i == 0 else 1.0,
            x0=4.0, v0=4.0)
        for i in range(n)
    )
    return Scenario(arms=arms, m=1, beta=beta, horizon=horizon, seed=seed)
