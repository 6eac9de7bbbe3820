"""Closed-form optimal wholesale and retail prices for every partnership scenario.

Notation in code: ``a = 1 - gamma`` is the cellular share of MVNO traffic,
``s`` is the price-weighted customer base ``q1/p1 + q2/p2`` and ``t`` is
``Q + (r0 - ct0) * s``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .market import (
    DEFAULT_TOL,
    CustomerFlows,
    MarketParams,
    Scenario,
    ScenarioKind,
    customer_flows,
    derive,
    mno_profit,
    mvno_profit,
)

Point = Tuple[float, float]


class NegativePriceWarning(UserWarning):
    """A closed-form price fell outside its economic domain."""


@dataclass(frozen=True)
class Thresholds:
    r_bar_10: float
    r_bar_20: float
    r_bar_0: float
    r_flat_0: float

    def r_bar_i0(self, i: int) -> float:
        return self.r_bar_10 if i == 1 else self.r_bar_20


@dataclass(frozen=True)
class PriceSolution:
    """Optimal prices, flows and profits for one scenario.

    ``w1``/``w2`` are ``None`` for an MNO that does not partner. When the
    simultaneous-move model has no solution ``feasible`` is false and every
    price, flow and profit field is ``None``.
    """

    scenario: Scenario
    w1: Optional[float]
    w2: Optional[float]
    p0: Optional[float]
    boundary: bool
    flows: Optional[CustomerFlows]
    profit_mvno: Optional[float]
    profit_mno1: Optional[float]
    profit_mno2: Optional[float]
    feasible: bool = True
    diagnostics: Tuple[str, ...] = ()

    @property
    def leader(self) -> Optional[int]:
        if self.scenario.kind is ScenarioKind.PART_PART_FS:
            return self.scenario.mno
        return None

    @property
    def w(self) -> Tuple[Optional[float], Optional[float]]:
        return (self.w1, self.w2)

    def profit(self, i: int) -> Optional[float]:
        return self.profit_mno1 if i == 1 else self.profit_mno2


@dataclass(frozen=True)
class Region:
    """The triangle of wholesale pairs where the MVNO's unclamped price stays below p2.

    Membership is ``k1*w1 + k2*w2 <= rhs`` with ``w1, w2 >= 0``; the segment
    where equality holds is the boundary on which the MVNO prices at p2.
    """

    k1: float
    k2: float
    rhs: float

    @classmethod
    def from_params(cls, params: MarketParams) -> "Region":
        d = derive(params)
        a = 1.0 - params.gamma
        return cls(
            k1=a * d.pi1 / 2.0,
            k2=a * d.pi2 / 2.0,
            rhs=params.p2 - d.q_total / (2.0 * d.s) - (params.ct0 - params.r0) / 2.0,
        )

    def slack(self, w1, w2):
        """``p2 - p0_tilde(w1, w2)``: nonnegative inside the region."""
        return self.rhs - self.k1 * w1 - self.k2 * w2

    def contains(self, w1: float, w2: float, tol: float = DEFAULT_TOL) -> bool:
        return w1 >= -tol and w2 >= -tol and self.slack(w1, w2) >= -tol

    def on_boundary(self, w1: float, w2: float, tol: float = DEFAULT_TOL) -> bool:
        return abs(self.slack(w1, w2)) <= tol

    @property
    def intercepts(self) -> Point:
        return (self.rhs / self.k1, self.rhs / self.k2)


def _other(i: int) -> int:
    if i not in (1, 2):
        raise ValueError(f"MNO id must be 1 or 2, got {i!r}")
    return 3 - i


# -- retail best responses ---------------------------------------------------


def p0_tilde_single(params: MarketParams, wi):
    """Unclamped MVNO price when a single partner charges ``wi``."""
    d = derive(params)
    a = 1.0 - params.gamma
    return a * wi / 2.0 + d.q_total / (2.0 * d.s) + (params.ct0 - params.r0) / 2.0


def p0_tilde_pair(params: MarketParams, w1, w2):
    """Unclamped MVNO price when both MNOs partner; callers clamp to [0, p2]."""
    d = derive(params)
    a = 1.0 - params.gamma
    return (
        a * (d.pi1 * w1 + d.pi2 * w2) / 2.0
        + d.q_total / (2.0 * d.s)
        + (params.ct0 - params.r0) / 2.0
    )


def p0_star_single(params: MarketParams, wi):
    return np.clip(p0_tilde_single(params, wi), 0.0, params.p2)


def p0_star_pair(params: MarketParams, w1, w2):
    return np.clip(p0_tilde_pair(params, w1, w2), 0.0, params.p2)


def reduced_mno_profit_single(params: MarketParams, i: int, wi, extend: bool = False):
    """Partner profit after the MVNO reacts optimally to ``wi`` (one partner only).

    ``extend=True`` skips the clamp and evaluates the quadratic expression
    everywhere, which is what the curvature and stationarity checks need.
    """
    sc = Scenario.part_nonpart(i)
    p0 = p0_tilde_single(params, wi) if extend else p0_star_single(params, wi)
    w = (wi, None) if i == 1 else (None, wi)
    return mno_profit(params, sc, i, p0, w, check=not extend)


def reduced_mno_profit_pair(params: MarketParams, i: int, w1, w2, extend: bool = False):
    """Profit of MNO ``i`` when both partner and the MVNO reacts optimally."""
    sc = Scenario.part_part_ps()
    p0 = p0_tilde_pair(params, w1, w2) if extend else p0_star_pair(params, w1, w2)
    return mno_profit(params, sc, i, p0, (w1, w2), check=not extend)


# -- thresholds --------------------------------------------------------------


def r_bar_i0(params: MarketParams, i: int) -> float:
    d = derive(params)
    a = 1.0 - params.gamma
    return (
        d.h(i) * params.q(i) / (params.p(i) * d.s)
        + params.c(i) * a
        + 3.0 * d.q_total / d.s
        + params.ct0
        - 4.0 * params.p2
    )


def _threshold_base(params: MarketParams) -> float:
    d = derive(params)
    a = 1.0 - params.gamma
    return (
        d.h1 * params.q1 / (params.p1 * d.s)
        + d.h2 * params.q2 / (params.p2 * d.s)
        + a * (d.pi1 * params.c1 + d.pi2 * params.c2)
        + params.ct0
    )


def thresholds(params: MarketParams) -> Thresholds:
    d = derive(params)
    base = _threshold_base(params)
    ratio = d.q_total / d.s
    return Thresholds(
        r_bar_10=r_bar_i0(params, 1),
        r_bar_20=r_bar_i0(params, 2),
        r_bar_0=base + 7.0 * ratio - 8.0 * params.p2,
        r_flat_0=base + 5.0 * ratio - 6.0 * params.p2,
    )


# -- single partner ----------------------------------------------------------


def w_bar_single(params: MarketParams) -> float:
    """Largest wholesale price that keeps the MVNO strictly below p2 (one partner)."""
    d = derive(params)
    a = 1.0 - params.gamma
    return (2.0 * params.p2 - d.q_total / d.s + params.r0 - params.ct0) / a


def w_tilde_single(params: MarketParams, i: int) -> float:
    """Stationary point of the single partner's reduced profit."""
    d = derive(params)
    a = 1.0 - params.gamma
    return params.c(i) / 2.0 + (
        d.h(i) * params.q(i) / (2.0 * params.p(i) * d.s)
        + d.q_total / (2.0 * d.s)
        + (params.r0 - params.ct0) / 2.0
    ) / a


def _finish(
    params: MarketParams,
    scenario: Scenario,
    w: Tuple[Optional[float], Optional[float]],
    p0: float,
    tol: float,
    diagnostics: list,
) -> PriceSolution:
    for k, wk in enumerate(w, start=1):
        if wk is not None and wk < 0:
            msg = f"negative wholesale price w{k}={wk:.6g} reported unclamped"
            diagnostics.append(msg)
            warnings.warn(msg, NegativePriceWarning, stacklevel=3)
    if p0 < 0:
        diagnostics.append(f"MVNO price {p0:.6g} clamped to 0")
        warnings.warn(diagnostics[-1], NegativePriceWarning, stacklevel=3)
        p0 = 0.0
    return PriceSolution(
        scenario=scenario,
        w1=w[0],
        w2=w[1],
        p0=p0,
        boundary=abs(p0 - params.p2) <= tol,
        flows=customer_flows(params, scenario, p0),
        profit_mvno=float(mvno_profit(params, scenario, p0, w)),
        profit_mno1=float(mno_profit(params, scenario, 1, p0, w)),
        profit_mno2=float(mno_profit(params, scenario, 2, p0, w)),
        feasible=True,
        diagnostics=tuple(diagnostics),
    )


def solve_part_nonpart(params: MarketParams, partner: int, tol: float = DEFAULT_TOL) -> PriceSolution:
    """Optimal prices when only ``partner`` hosts the MVNO.

    The partner charges ``min(w_bar, w_tilde)``; a tie is reported on the
    boundary branch, where the MVNO prices exactly at p2.
    """
    scenario = Scenario.part_nonpart(partner)
    wb = w_bar_single(params)
    wt = w_tilde_single(params, partner)
    if wb <= wt:
        wi, p0 = wb, params.p2
    else:
        wi = wt
        p0 = min(float(p0_tilde_single(params, wt)), params.p2)
    w = (wi, None) if partner == 1 else (None, wi)
    return _finish(params, scenario, w, p0, tol, [])


# -- both partner, fully sequential ------------------------------------------


def point_wA(params: MarketParams) -> Point:
    """Boundary optimum when MNO 2 leads (MNO 1 stationary, MVNO at p2)."""
    return _boundary_point(params, follower=1)


def point_wB(params: MarketParams) -> Point:
    """Boundary optimum when MNO 1 leads (MNO 2 stationary, MVNO at p2)."""
    return _boundary_point(params, follower=2)


def _boundary_point(params: MarketParams, follower: int) -> Point:
    d = derive(params)
    a = 1.0 - params.gamma
    j, i = follower, _other(follower)
    g_j = d.h(j) * params.q(j) / params.p(j) + params.c(j) * a * d.pi(j) * d.s
    w_follower = (g_j + 2.0 * d.q_total - 2.0 * d.s * params.p2) / (a * d.pi(j) * d.s)
    w_leader = (-g_j - 4.0 * d.q_total + 4.0 * params.p2 * d.s + d.t) / (a * d.pi(i) * d.s)
    return (w_follower, w_leader) if follower == 1 else (w_leader, w_follower)


def omega_follower(params: MarketParams, leader: int, wi):
    """Follower's stationary wholesale price given the leader's price ``wi``."""
    d = derive(params)
    a = 1.0 - params.gamma
    j = _other(leader)
    pj, pij = params.p(j), d.pi(j)
    return (
        params.c(j) / 2.0
        + d.h(j) * params.q(j) / (2.0 * pj * a * pij * d.s)
        + d.q_total / (2.0 * a * pij * d.s)
        - (params.ct0 - params.r0) / (2.0 * a * pij)
        - d.pi(leader) / (2.0 * pij) * wi
    )


def w_tilde_leader(params: MarketParams, leader: int) -> float:
    """Stationary point of the leader's profit along the follower's reaction line."""
    d = derive(params)
    a = 1.0 - params.gamma
    i, j = leader, _other(leader)
    num = (
        d.h(i) * params.q(i) / params.p(i)
        - d.h(j) * params.q(j) / params.p(j)
        + d.s * a * (params.c(i) * d.pi(i) - params.c(j) * d.pi(j))
        + d.t
    )
    return num / (2.0 * a * d.pi(i) * d.s)


def w_bar_leader(params: MarketParams, leader: int) -> float:
    """Leader price at which the follower's reaction line meets the boundary.

    Not the same quantity as :func:`w_bar_single` despite the similar role.
    """
    wA, wB = point_wA(params), point_wB(params)
    return wB[0] if leader == 1 else wA[1]


def point_w_tilde(params: MarketParams, leader: int) -> Point:
    wi = w_tilde_leader(params, leader)
    wj = float(omega_follower(params, leader, wi))
    return (wi, wj) if leader == 1 else (wj, wi)


def solve_part_part_fs(params: MarketParams, leader: int, tol: float = DEFAULT_TOL) -> PriceSolution:
    scenario = Scenario.part_part_fs(leader)
    th = thresholds(params)
    if params.r0 <= th.r_bar_0:
        w = point_wB(params) if leader == 1 else point_wA(params)
        p0 = params.p2
    else:
        w = point_w_tilde(params, leader)
        p0 = min(float(p0_tilde_pair(params, *w)), params.p2)
    return _finish(params, scenario, w, p0, tol, [])


# -- both partner, simultaneous ----------------------------------------------


def point_wC(params: MarketParams) -> Point:
    """Intersection of both MNOs' stationarity lines."""
    d = derive(params)
    a = 1.0 - params.gamma
    g1 = d.h1 * params.q1 / params.p1
    g2 = d.h2 * params.q2 / params.p2
    w1 = (2 * g1 - g2 + a * (2 * params.c1 * d.pi1 - params.c2 * d.pi2) * d.s + d.t) / (
        3 * a * d.pi1 * d.s
    )
    w2 = (2 * g2 - g1 + a * (2 * params.c2 * d.pi2 - params.c1 * d.pi1) * d.s + d.t) / (
        3 * a * d.pi2 * d.s
    )
    return (w1, w2)


def solve_part_part_ps(params: MarketParams, tol: float = DEFAULT_TOL) -> PriceSolution:
    """Simultaneous wholesale pricing.

    Below the indirect-revenue threshold no pair of wholesale prices is a
    joint optimum; that outcome is returned with ``feasible=False`` rather
    than raised.
    """
    scenario = Scenario.part_part_ps()
    gap = params.r0 - thresholds(params).r_flat_0
    if gap < -tol:
        return PriceSolution(
            scenario=scenario, w1=None, w2=None, p0=None, boundary=False, flows=None,
            profit_mvno=None, profit_mno1=None, profit_mno2=None, feasible=False,
            diagnostics=("no simultaneous optimum: r0 below threshold",),
        )
    w = point_wC(params)
    if gap <= tol:
        p0 = params.p2
    else:
        p0 = min(float(p0_tilde_pair(params, *w)), params.p2)
    return _finish(params, scenario, w, p0, tol, [])


def solve_no_entry(params: MarketParams) -> PriceSolution:
    scenario = Scenario.nonpart_nonpart()
    return PriceSolution(
        scenario=scenario, w1=None, w2=None, p0=None, boundary=False, flows=None,
        profit_mvno=None,
        profit_mno1=float(mno_profit(params, scenario, 1)),
        profit_mno2=float(mno_profit(params, scenario, 2)),
    )


def solve(params: MarketParams, scenario: Scenario, tol: float = DEFAULT_TOL) -> PriceSolution:
    kind = scenario.kind
    if kind is ScenarioKind.PART_NONPART:
        return solve_part_nonpart(params, scenario.mno, tol)
    if kind is ScenarioKind.PART_PART_FS:
        return solve_part_part_fs(params, scenario.mno, tol)
    if kind is ScenarioKind.PART_PART_PS:
        return solve_part_part_ps(params, tol)
    return solve_no_entry(params)
