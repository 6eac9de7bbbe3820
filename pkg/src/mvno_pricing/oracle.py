"""Brute-force and first-order verification of the closed-form prices.

Every check here works from the profit functions in :mod:`market` and
numerical search or finite differences. Closed forms from :mod:`solvers`
enter only as the values under test (and to size the search box).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import solvers
from .market import DEFAULT_TOL, MarketParams, ParameterError, Scenario, derive, mno_profit, mvno_profit

PRICE_TOL = 1e-3
PROFIT_TOL = 1e-4
KKT_TOL = 1e-6


@dataclass(frozen=True)
class GridSpec:
    """Search-grid settings; bounds left as ``None`` are sized from the market."""

    resolution: int = 2001
    rounds: int = 2
    p0_bounds: Optional[Tuple[float, float]] = None
    w_bounds: Optional[Tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.resolution < 3:
            raise ValueError("grid resolution must be at least 3")
        if self.rounds < 0:
            raise ValueError("refinement rounds must be nonnegative")
        for name in ("p0_bounds", "w_bounds"):
            b = getattr(self, name)
            if b is None:
                continue
            lo, hi = b
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
                raise ValueError(f"{name} must be finite with upper > lower")


@dataclass(frozen=True)
class OracleVerdict:
    name: str
    closed_form: Dict[str, Optional[float]]
    oracle: Dict[str, Optional[float]]
    gaps: Dict[str, float]
    tolerances: Dict[str, float]
    passed: bool
    detail: str = ""

    @property
    def max_gap(self) -> float:
        return max(self.gaps.values(), default=0.0)


@dataclass(frozen=True)
class KKTReport:
    """First-order diagnostics at a candidate wholesale pair.

    ``stationarity`` and ``multipliers`` hold one entry per optimizing MNO
    (follower then leader for the sequential model, MNO 1 then MNO 2 for the
    simultaneous model). Stationarity residuals are relative to
    ``profit_scale / p2``.
    """

    stationarity: Tuple[float, ...]
    multipliers: Tuple[float, ...]
    complementary_slackness: float
    feasibility_margin: float
    on_boundary: bool
    satisfied: bool
    multiplier_identity_gap: Optional[float] = None


# -- search primitives -------------------------------------------------------


def refining_argmax(
    f: Callable[[np.ndarray], np.ndarray],
    lower,
    upper,
    spec: GridSpec,
) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise grid maximization with zooming refinement.

    ``lower``/``upper`` are arrays of shape (m,); ``f`` maps an (m, n) array
    of points to values, using ``-inf`` for infeasible points. Each round
    shrinks the window tenfold around the incumbent. Ties go to the lowest
    index.
    """
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    lo, hi = np.broadcast_arrays(lo, hi)
    rows = np.arange(lo.shape[0])
    t = np.linspace(0.0, 1.0, spec.resolution)
    a, b = lo.copy(), hi.copy()
    best_x = np.full(lo.shape, np.nan)
    best_v = np.full(lo.shape, -np.inf)
    span = hi - lo
    for r in range(spec.rounds + 1):
        X = a[:, None] + (b - a)[:, None] * t
        V = np.asarray(f(X), dtype=float)
        V = np.where(np.isnan(V), -np.inf, V)
        k = np.argmax(V, axis=1)
        x, v = X[rows, k], V[rows, k]
        better = (v > best_v) | np.isnan(best_x)
        best_x = np.where(better, x, best_x)
        best_v = np.where(better, v, best_v)
        spacing = (b - a) / (spec.resolution - 1)
        half = np.maximum(span / 10.0 ** (r + 1) / 2.0, 2.0 * spacing)
        a = np.maximum(lo, best_x - half)
        b = np.minimum(hi, best_x + half)
    return best_x, best_v


def _parabolic_polish(f1: Callable[[np.ndarray], np.ndarray], x: float, step: float, lo: float, hi: float) -> float:
    """Vertex of the parabola through f at x-step, x, x+step (exact for quadratics)."""
    if x - step < lo or x + step > hi:
        return x
    fm, f0, fp = f1(np.array([x - step, x, x + step]))
    curv = fm - 2.0 * f0 + fp
    if not curv < 0:
        return x
    vertex = x + step * (fm - fp) / (2.0 * curv)
    return float(min(max(vertex, lo), hi))


def _central_diff(f: Callable[[float], float], x: float) -> float:
    h = 1e-5 * max(1.0, abs(x))
    return (f(x + h) - f(x - h)) / (2.0 * h)


def _second_diff(f: Callable[[float], float], x: float) -> float:
    # the profits are exact quadratics; a wide step only reduces rounding
    h = 1e-2 * max(1.0, abs(x))
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


def _rel_gap(x: Optional[float], y: Optional[float], floor: float = 1.0) -> float:
    if x is None or y is None:
        return 0.0 if x is None and y is None else float("inf")
    return abs(x - y) / max(abs(x), abs(y), floor)


def _profit_scale(params: MarketParams) -> float:
    d = derive(params)
    return max(d.h1 * params.q1, d.h2 * params.q2, 1.0)


def _edge_price(params: MarketParams, scenario: Scenario, k: int, other=None):
    """MNO ``k``'s wholesale price at which the MVNO's best price reaches p2.

    The MVNO's marginal profit at p2 is affine in each wholesale price, so
    two evaluations locate the root exactly. ``other`` may be an array.
    """
    other = None if other is None else np.atleast_1d(np.asarray(other, dtype=float))
    zero = np.zeros(1) if other is None else np.zeros_like(other)

    def marginal(wk):
        w = (wk, other) if k == 1 else (other, wk)
        return _mvno_marginal_at_p2(params, scenario, w)

    m0, m1 = marginal(zero), marginal(zero + 1.0)
    return -m0 / (m1 - m0)


def _box_upper(edge, widen: float = 1.0):
    return np.maximum(np.asarray(edge, dtype=float) * widen * (1.0 + 1e-6), 1e-9)


def _w_bounds(params: MarketParams, grid: GridSpec, k: int, scenario: Optional[Scenario] = None) -> Tuple[float, float]:
    """Search interval for MNO ``k``: twice its price that alone pushes the MVNO to p2."""
    if grid.w_bounds is not None:
        return grid.w_bounds
    sc = scenario or Scenario.part_part_ps()
    return 0.0, float(_box_upper(_edge_price(params, sc, k, 0.0 if sc.both_partner else None), 2.0)[0])


def _p0_bounds(params: MarketParams, grid: GridSpec) -> Tuple[float, float]:
    return grid.p0_bounds if grid.p0_bounds is not None else (0.0, params.p2)


def _mvno_marginal_at_p2(params: MarketParams, scenario: Scenario, w) -> np.ndarray:
    """One-sided derivative of MVNO profit in p0 at p0 = p2 (exact for quadratics)."""
    p2 = params.p2
    h = 1e-5 * max(1.0, p2)
    f0 = mvno_profit(params, scenario, p2, w, check=False)
    f1 = mvno_profit(params, scenario, p2 - h, w, check=False)
    f2 = mvno_profit(params, scenario, p2 - 2.0 * h, w, check=False)
    return (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h)


def _marginal_tol(params: MarketParams) -> float:
    d = derive(params)
    return 1e-7 * params.eps * d.q_total


def _wvec(i: int, wi, other=None):
    return (wi, other) if i == 1 else (other, wi)


# -- MVNO layer --------------------------------------------------------------


def grid_argmax_p0_batch(params: MarketParams, scenario: Scenario, w, grid: GridSpec):
    """Vectorized MVNO price search; entries of ``w`` may be arrays of shape (m,)."""
    lo, hi = _p0_bounds(params, grid)
    w_cols = tuple(None if wk is None else np.atleast_1d(np.asarray(wk, dtype=float))[:, None] for wk in w)
    m = max(1, *(c.shape[0] for c in w_cols if c is not None))

    def objective(P):
        return mvno_profit(params, scenario, P, w_cols)

    x, v = refining_argmax(objective, np.full(m, lo), np.full(m, hi), grid)
    # three-point vertex step: removes the grid's rounding, which the outer
    # search over wholesale prices would otherwise exploit
    step = (hi - lo) / (grid.resolution - 1) / 10.0 ** grid.rounds
    inside = (x - step >= lo) & (x + step <= hi)
    X = np.clip(np.stack([x - step, x, x + step], axis=1), lo, hi)
    F = np.asarray(objective(X), dtype=float)
    curv = F[:, 0] - 2.0 * F[:, 1] + F[:, 2]
    ok = inside & (curv < 0)
    vertex = x + step * (F[:, 0] - F[:, 2]) / (2.0 * np.where(ok, curv, -1.0))
    vertex = np.clip(vertex, np.maximum(lo, x - step), np.minimum(hi, x + step))
    x = np.where(ok, vertex, x)
    v = np.where(ok, np.asarray(objective(x[:, None]), dtype=float)[:, 0], v)
    return x, v


def grid_argmax_p0(params: MarketParams, scenario: Scenario, w, grid: GridSpec = GridSpec()) -> Tuple[float, float]:
    """Grid maximizer of the MVNO profit over ``0 <= p0 <= p2`` for fixed wholesale prices."""
    x, v = grid_argmax_p0_batch(params, scenario, w, grid)
    return float(x[0]), float(v[0])


# -- single partner ----------------------------------------------------------


def part_nonpart_oracle(
    params: MarketParams, partner: int, grid: GridSpec = GridSpec(), perturb: float = 0.0
) -> OracleVerdict:
    """Nested search (outer wholesale price, inner MVNO price) for a single partner.

    Wholesale prices that push the MVNO's unconstrained optimum above p2 are
    excluded: there the partner's profit grows without bound while the MVNO's
    collapses, so no economically meaningful optimum exists.
    """
    scenario = Scenario.part_nonpart(partner)
    if grid.w_bounds is not None:
        w_lo, w_hi = grid.w_bounds
    else:
        # above this price the MVNO is pushed past p2, so nothing beyond it is admissible
        w_lo, w_hi = 0.0, float(_box_upper(_edge_price(params, scenario, partner))[0])
    mtol = _marginal_tol(params)

    def outer(W):
        flat = W.ravel()
        w = _wvec(partner, flat)
        p0, _ = grid_argmax_p0_batch(params, scenario, w, grid)
        feasible = _mvno_marginal_at_p2(params, scenario, w) <= mtol
        val = mno_profit(params, scenario, partner, p0, w)
        return np.where(feasible, val, -np.inf).reshape(W.shape)

    wx, vx = refining_argmax(outer, [w_lo], [w_hi], grid)
    sol = solvers.solve_part_nonpart(params, partner)
    w_cf = sol.w[partner - 1] + perturb
    p0_cf = sol.p0
    r_cf = float(mno_profit(params, scenario, partner, p0_cf, _wvec(partner, w_cf), check=False))
    closed = {"w": w_cf, "p0": p0_cf, "profit": r_cf}
    if not np.isfinite(vx[0]):
        found = {"w": None, "p0": None, "profit": None}
        return _compare(f"part-nonpart-{partner}", closed, found, "no admissible nonnegative wholesale price")
    w_star = float(wx[0])
    p0_star, _ = grid_argmax_p0(params, scenario, _wvec(partner, w_star), grid)
    r_star = float(mno_profit(params, scenario, partner, p0_star, _wvec(partner, w_star)))
    found = {"w": w_star, "p0": p0_star, "profit": r_star}
    return _compare(f"part-nonpart-{partner}", closed, found)


def _compare(name: str, closed: dict, found: dict, detail: str = "", extra_ok: bool = True) -> OracleVerdict:
    gaps, tols = {}, {}
    for key in closed:
        gaps[key] = _rel_gap(closed[key], found[key])
        tols[key] = PROFIT_TOL if key.startswith("profit") else PRICE_TOL
    passed = extra_ok and all(gaps[k] <= tols[k] for k in gaps)
    return OracleVerdict(name, closed, found, gaps, tols, passed, detail)


# -- both partner, fully sequential ------------------------------------------


def follower_response(params: MarketParams, leader: int, w_leader: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Follower's stationary price for each leader price, by grid search.

    The follower's reduced profit is evaluated with the MVNO price unclamped,
    i.e. on the quadratic branch that holds inside the feasible triangle.
    """
    follower = 3 - leader
    wl = np.atleast_1d(np.asarray(w_leader, dtype=float))
    if grid.w_bounds is not None:
        lo, hi = (np.full(wl.shape, v) for v in grid.w_bounds)
    else:
        # a response beyond the follower's edge leaves the triangle, so a box
        # half again as wide is enough to detect it
        edge = _edge_price(params, Scenario.part_part_fs(leader), follower, wl)
        lo, hi = np.zeros(wl.shape), _box_upper(edge, 1.5)

    def objective(WF):
        w1, w2 = (wl[:, None], WF) if leader == 1 else (WF, wl[:, None])
        return solvers.reduced_mno_profit_pair(params, follower, w1, w2, extend=True)

    wf, _ = refining_argmax(objective, lo, hi, grid)
    return wf


def bilevel_fs_oracle(
    params: MarketParams, leader: int, grid: GridSpec = GridSpec(), perturb: float = 0.0
) -> OracleVerdict:
    """Leader grid, follower grid per leader price, then the MVNO price grid.

    Leader prices are admissible when the follower's unconstrained response
    keeps the pair inside the feasible triangle; pairs where the follower
    would be pinned to the boundary are not equilibria of interest.
    """
    follower = 3 - leader
    scenario = Scenario.part_part_fs(leader)
    if grid.w_bounds is not None:
        lo, hi = grid.w_bounds
    else:
        # with a nonnegative follower price the leader can never exceed this edge
        lo, hi = 0.0, float(_box_upper(_edge_price(params, scenario, leader, 0.0))[0])
    mtol = _marginal_tol(params)

    def pair(wl, wf):
        return (wl, wf) if leader == 1 else (wf, wl)

    def outer(WL):
        flat = WL.ravel()
        wf = follower_response(params, leader, flat, grid)
        w1, w2 = pair(flat, wf)
        feasible = _mvno_marginal_at_p2(params, scenario, (w1, w2)) <= mtol
        val = solvers.reduced_mno_profit_pair(params, leader, w1, w2)
        return np.where(feasible, val, -np.inf).reshape(WL.shape)

    wl_x, wl_v = refining_argmax(outer, [lo], [hi], grid)
    sol = solvers.solve_part_part_fs(params, leader)
    wl_cf = sol.w[leader - 1] + perturb
    wf_cf = sol.w[follower - 1]
    r_cf = float(mno_profit(params, scenario, leader, sol.p0, pair(wl_cf, wf_cf), check=False))
    closed = {"w_leader": wl_cf, "w_follower": wf_cf, "p0": sol.p0, "profit_leader": r_cf}
    if not np.isfinite(wl_v[0]):
        found = dict.fromkeys(closed)
        return _compare(f"fs-leader-{leader}", closed, found, "no admissible nonnegative leader price", False)
    wl_star = float(wl_x[0])
    wf_star = float(follower_response(params, leader, np.array([wl_star]), grid)[0])
    w1, w2 = pair(wl_star, wf_star)
    p0_star, _ = grid_argmax_p0(params, scenario, (w1, w2), grid)
    r_star = float(mno_profit(params, scenario, leader, p0_star, (w1, w2)))
    found = {"w_leader": wl_star, "w_follower": wf_star, "p0": p0_star, "profit_leader": r_star}
    oracle_boundary = params.p2 - p0_star <= boundary_tolerance(params, grid)
    branch_ok = oracle_boundary == sol.boundary
    detail = f"closed-form branch={'boundary' if sol.boundary else 'interior'}, " \
             f"oracle branch={'boundary' if oracle_boundary else 'interior'}"
    return _compare(f"fs-leader-{leader}", closed, found, detail, branch_ok)


def boundary_tolerance(params: MarketParams, grid: Optional[GridSpec] = None) -> float:
    """How close to p2 a searched MVNO price must be to count as the boundary branch.

    With a grid, the tolerance is never finer than what ten final-round
    wholesale spacings can move the MVNO price. A box spanning the whole
    feasible triangle moves the MVNO price by at most twice the gap between
    p2 and the price at zero wholesale cost.
    """
    tol = 1e-6 * params.p2
    if grid is not None:
        reach = 2.0 * abs(params.p2 - float(solvers.p0_tilde_pair(params, 0.0, 0.0)))
        tol = max(tol, 10.0 * reach / (grid.resolution - 1) / 10.0 ** grid.rounds)
    return tol


# -- both partner, simultaneous ----------------------------------------------


@dataclass(frozen=True)
class FixedPointResult:
    point: Tuple[float, float]
    converged: bool
    iterations: int
    left_region: bool
    slack: float
    classification: str  # "interior", "boundary" or "none"
    trajectory_exited: bool = False


def best_response(params: MarketParams, i: int, w_other: float, grid: GridSpec) -> float:
    """MNO ``i``'s best wholesale price against ``w_other`` on the quadratic branch."""
    lo, hi = _w_bounds(params, grid, i)

    def f(W):
        w1, w2 = (W, w_other) if i == 1 else (w_other, W)
        return solvers.reduced_mno_profit_pair(params, i, w1, w2, extend=True)

    x = float(refining_argmax(f, [lo], [hi], grid)[0][0])
    spacing = (hi - lo) / (grid.resolution - 1) / 10.0 ** grid.rounds
    return _parabolic_polish(lambda v: f(v), x, max(spacing, 1e-6 * max(1.0, abs(x))), lo, hi)


def ps_fixed_point(
    params: MarketParams,
    grid: GridSpec = GridSpec(),
    damping: float = 0.5,
    max_iter: int = 500,
    move_tol: float = 1e-8,
) -> FixedPointResult:
    """Damped simultaneous best-response iteration started inside the feasible triangle."""
    region = solvers.Region.from_params(params)
    scale = max(params.p2, 1.0)
    x1, x2 = (v / 3.0 for v in region.intercepts) if region.rhs > 0 else (0.0, 0.0)
    exited = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        b1 = best_response(params, 1, x2, grid)
        b2 = best_response(params, 2, x1, grid)
        n1 = x1 + damping * (b1 - x1)
        n2 = x2 + damping * (b2 - x2)
        move = max(abs(n1 - x1), abs(n2 - x2))
        x1, x2 = n1, n2
        if region.slack(x1, x2) < -boundary_tolerance(params):
            exited = True
        if move <= move_tol * scale:
            converged = True
            break
    slack = float(params.p2 - solvers.p0_tilde_pair(params, x1, x2))
    btol = boundary_tolerance(params)
    inside = x1 >= 0 and x2 >= 0 and slack >= -btol
    if not converged or not inside:
        cls = "none"
    elif slack <= btol:
        cls = "boundary"
    else:
        cls = "interior"
    return FixedPointResult((x1, x2), converged, it, not inside, slack, cls, exited)


def simultaneous_ps_oracle(
    params: MarketParams, grid: GridSpec = GridSpec(), perturb: float = 0.0
) -> OracleVerdict:
    """Compare the simultaneous-model classification and prices with best-response dynamics."""
    fp = ps_fixed_point(params, grid)
    sol = solvers.solve_part_part_ps(params)
    if not sol.feasible:
        expected = "none"
    else:
        expected = "boundary" if sol.boundary else "interior"
    detail = (
        f"closed form: {expected}; oracle: {fp.classification} after {fp.iterations} iterations"
        f" (converged={fp.converged}, left region={fp.left_region})"
    )
    agree = expected == fp.classification
    if expected == "none" or fp.classification == "none":
        name = "ps-no-solution" if expected == "none" else "ps"
        return OracleVerdict(name, {"class": expected}, {"class": fp.classification}, {}, {}, agree, detail)
    scenario = Scenario.part_part_ps()
    p0_star, _ = grid_argmax_p0(params, scenario, fp.point, grid)
    closed = {"w1": sol.w1 + perturb, "w2": sol.w2, "p0": sol.p0}
    found = {"w1": fp.point[0], "w2": fp.point[1], "p0": p0_star}
    return _compare("ps", closed, found, detail, agree)


# -- first-order conditions --------------------------------------------------


def _lambda_scale(params: MarketParams) -> float:
    return params.eps * derive(params).q_total


def _partial(params: MarketParams, i: int, wrt: int, w: Tuple[float, float]) -> float:
    """d R_i* / d w_wrt on the quadratic branch, by central differences."""
    def f(v):
        ww = list(w)
        ww[wrt - 1] = v
        return float(solvers.reduced_mno_profit_pair(params, i, ww[0], ww[1], extend=True))

    return _central_diff(f, w[wrt - 1])


def kkt_residuals_fs(
    params: MarketParams, leader: int, candidate: Tuple[float, float], tol: float = KKT_TOL
) -> KKTReport:
    """KKT system of the sequential model at ``candidate``.

    The follower maximizes over its own price subject to the MVNO price
    staying at or below p2. The leader maximizes along the follower's
    reaction line (slope obtained by finite differences) under the same
    constraint.
    """
    follower = 3 - leader
    d = derive(params)
    a = 1.0 - params.gamma
    w = (float(candidate[0]), float(candidate[1]))
    margin = float(params.p2 - solvers.p0_tilde_pair(params, *w))
    g_scale = _profit_scale(params) / params.p2
    on_delta = abs(margin) <= DEFAULT_TOL * max(1.0, params.p2)

    g_f = _partial(params, follower, follower, w)
    dp_f = a * d.pi(follower) / 2.0

    # reaction-line slope from the follower's cross and own curvature
    def gf_at(wl):
        ww = list(w)
        ww[leader - 1] = wl
        return _partial(params, follower, follower, (ww[0], ww[1]))

    def gf_own(wf):
        ww = list(w)
        ww[follower - 1] = wf
        return _partial(params, follower, follower, (ww[0], ww[1]))

    h = 1e-2 * max(1.0, abs(w[leader - 1]))
    cross = (gf_at(w[leader - 1] + h) - gf_at(w[leader - 1] - h)) / (2 * h)
    hf = 1e-2 * max(1.0, abs(w[follower - 1]))
    own = (gf_own(w[follower - 1] + hf) - gf_own(w[follower - 1] - hf)) / (2 * hf)
    slope = -cross / own
    g_l = _partial(params, leader, leader, w) + _partial(params, leader, follower, w) * slope
    dp_l = a * (d.pi(leader) + d.pi(follower) * slope) / 2.0

    if on_delta:
        lam_f, lam_l = g_f / dp_f, g_l / dp_l
        res = (0.0, 0.0)
    else:
        lam_f = lam_l = 0.0
        res = (abs(g_f) / g_scale, abs(g_l) / g_scale)
    cs = max(abs(lam_f * margin), abs(lam_l * margin)) / _profit_scale(params)
    lam_tol = 1e-9 * _lambda_scale(params)
    satisfied = (
        max(res) <= tol
        and min(lam_f, lam_l) >= -lam_tol
        and cs <= 1e-9
        and margin >= -DEFAULT_TOL * max(1.0, params.p2)
    )
    return KKTReport((res[0], res[1]), (lam_f, lam_l), cs, margin, on_delta, satisfied)


def kkt_residuals_ps(params: MarketParams, candidate: Tuple[float, float], tol: float = KKT_TOL) -> KKTReport:
    """KKT systems of both MNOs in the simultaneous model at ``candidate``.

    On the boundary the two multipliers are recovered from the stationarity
    equations and their sum is compared with ``eps*S*(r_flat_0 - r0)``.
    """
    d = derive(params)
    a = 1.0 - params.gamma
    w = (float(candidate[0]), float(candidate[1]))
    margin = float(params.p2 - solvers.p0_tilde_pair(params, *w))
    g_scale = _profit_scale(params) / params.p2
    on_delta = abs(margin) <= DEFAULT_TOL * max(1.0, params.p2)
    g = [_partial(params, i, i, w) for i in (1, 2)]
    identity_gap = None
    if on_delta:
        lam = [g[k] / (a * d.pi(k + 1) / 2.0) for k in range(2)]
        res = (0.0, 0.0)
        target = params.eps * d.s * (solvers.thresholds(params).r_flat_0 - params.r0)
        identity_gap = abs(lam[0] + lam[1] - target) / max(abs(target), _lambda_scale(params))
    else:
        lam = [0.0, 0.0]
        res = (abs(g[0]) / g_scale, abs(g[1]) / g_scale)
    cs = max(abs(lam[0] * margin), abs(lam[1] * margin)) / _profit_scale(params)
    lam_tol = 1e-9 * _lambda_scale(params)
    satisfied = (
        max(res) <= tol
        and min(lam) >= -lam_tol
        and cs <= 1e-9
        and margin >= -DEFAULT_TOL * max(1.0, params.p2)
    )
    return KKTReport(res, (lam[0], lam[1]), cs, margin, on_delta, satisfied, identity_gap)


def kkt_residuals_single(params: MarketParams, partner: int, wi: float, tol: float = KKT_TOL) -> KKTReport:
    """KKT system of a single partner with the constraint that the MVNO stays below p2."""
    a = 1.0 - params.gamma
    margin = float(params.p2 - solvers.p0_tilde_single(params, wi))
    on_delta = abs(margin) <= DEFAULT_TOL * max(1.0, params.p2)
    g = _central_diff(
        lambda v: float(solvers.reduced_mno_profit_single(params, partner, v, extend=True)), wi
    )
    g_scale = _profit_scale(params) / params.p2
    if on_delta:
        lam, res = g / (a / 2.0), 0.0
    else:
        lam, res = 0.0, abs(g) / g_scale
    cs = abs(lam * margin) / _profit_scale(params)
    satisfied = (
        res <= tol
        and lam >= -1e-9 * _lambda_scale(params)
        and cs <= 1e-9
        and margin >= -DEFAULT_TOL * max(1.0, params.p2)
    )
    return KKTReport((res,), (lam,), cs, margin, on_delta, satisfied)


# -- boundary-following checks --------------------------------------------


def omega_bar(params: MarketParams, leader: int, wi):
    """Follower price that keeps the MVNO exactly at p2, given the leader's price."""
    d = derive(params)
    a = 1.0 - params.gamma
    j = 3 - leader
    num = -a * d.pi(leader) * d.s * wi - d.q_total - d.s * (params.ct0 - params.r0) + 2.0 * d.s * params.p2
    return num / (d.s * a * d.pi(j))


def boundary_multiplier(params: MarketParams, leader: int, wi):
    """Follower multiplier needed to hold the MVNO at p2, as a function of the leader's price."""
    d = derive(params)
    a = 1.0 - params.gamma
    j = 3 - leader
    e, s = params.eps, d.s
    return (
        e * s * a * d.pi(leader) * wi
        + e * d.h(j) * params.q(j) / params.p(j)
        + 3.0 * e * d.q_total
        + e * s * (params.ct0 - params.r0)
        + e * s * params.c(j) * a * d.pi(j)
        - 4.0 * e * s * params.p2
    )


def fs_boundary_slope_check(params: MarketParams, leader: int, n_points: int = 5) -> OracleVerdict:
    """Along the boundary the leader's profit rises with its own price.

    With the follower pinned to the boundary, the leader's derivative should
    equal ``pi_i (1-gamma) Q0`` at p0 = p2 and be strictly positive, which
    drives the follower's price to zero at the end of the segment.
    """
    d = derive(params)
    a = 1.0 - params.gamma
    region = solvers.Region.from_params(params)
    end = region.intercepts[leader - 1]
    q0 = float(solvers.customer_flows(params, Scenario.part_part_fs(leader), params.p2).q0)
    expected = d.pi(leader) * a * q0

    def along(wi):
        wj = float(omega_bar(params, leader, wi))
        w1, w2 = (wi, wj) if leader == 1 else (wj, wi)
        return float(solvers.reduced_mno_profit_pair(params, leader, w1, w2, extend=True))

    xs = np.linspace(0.1, 0.9, n_points) * end
    slopes = [_central_diff(along, float(x)) for x in xs]
    on_delta = all(
        abs(float(solvers.p0_tilde_pair(params, *((x, omega_bar(params, leader, x)) if leader == 1
                                                  else (omega_bar(params, leader, x), x)))) - params.p2)
        <= 1e-9 * params.p2
        for x in xs
    )
    gaps = {f"slope_{k}": _rel_gap(expected, s, floor=1e-12) for k, s in enumerate(slopes)}
    tols = {k: 1e-5 for k in gaps}
    positive = all(s > 0 for s in slopes)
    passed = on_delta and positive and all(g <= 1e-5 for g in gaps.values())
    detail = f"segment end w={end:.6g}; slopes positive={positive}; points on boundary={on_delta}"
    closed = {k: expected for k in gaps}
    found = {f"slope_{k}": s for k, s in enumerate(slopes)}
    return OracleVerdict(f"fs-boundary-slope-leader-{leader}", closed, found, gaps, tols, passed, detail)


def phi_parametrization(params: MarketParams, lam1):
    """Boundary wholesale pair indexed by MNO 1's multiplier when both constraints bind."""
    d = derive(params)
    a = 1.0 - params.gamma
    total = params.eps * d.s * (solvers.thresholds(params).r_flat_0 - params.r0)
    lam2 = total - lam1

    def w_of(i, lam):
        return (
            d.h(i) * params.q(i) / params.p(i)
            + params.c(i) * a * d.pi(i) * d.s
            + 2.0 * d.q_total
            - 2.0 * d.s * params.p2
            - lam / params.eps
        ) / (a * d.pi(i) * d.s)

    return w_of(1, lam1), w_of(2, lam2)


def ps_phi_linearity_check(params: MarketParams, n_points: int = 7) -> OracleVerdict:
    """Both MNO profits are affine and opposed along the doubly-constrained segment."""
    th = solvers.thresholds(params)
    if params.r0 >= th.r_flat_0:
        raise ParameterError("r0", "the doubly-constrained segment exists only for r0 below the threshold")
    d = derive(params)
    length = params.eps * d.s * (th.r_flat_0 - params.r0)
    lams = np.linspace(0.0, length, n_points)
    w1, w2 = phi_parametrization(params, lams)
    phi1 = np.asarray(solvers.reduced_mno_profit_pair(params, 1, w1, w2))
    phi2 = np.asarray(solvers.reduced_mno_profit_pair(params, 2, w1, w2))
    scale = _profit_scale(params)
    sd1 = float(np.max(np.abs(np.diff(phi1, 2)))) / scale
    sd2 = float(np.max(np.abs(np.diff(phi2, 2)))) / scale
    slack = np.abs(params.p2 - solvers.p0_tilde_pair(params, w1, w2))
    on_delta = bool(np.all(slack <= 1e-9 * params.p2))
    opposed = int(np.argmax(phi1)) == 0 and int(np.argmax(phi2)) == n_points - 1
    if length == 0:
        opposed = True
    passed = sd1 <= 1e-7 and sd2 <= 1e-7 and on_delta and opposed
    detail = (
        f"interval [0, {length:.6g}]; phi1 max at lambda1=0: {int(np.argmax(phi1)) == 0}; "
        f"phi2 max at interval end: {int(np.argmax(phi2)) == n_points - 1}; on boundary: {on_delta}"
    )
    return OracleVerdict(
        "ps-phi-linearity",
        {"second_diff_phi1": 0.0, "second_diff_phi2": 0.0},
        {"second_diff_phi1": sd1, "second_diff_phi2": sd2},
        {"second_diff_phi1": sd1, "second_diff_phi2": sd2},
        {"second_diff_phi1": 1e-7, "second_diff_phi2": 1e-7},
        passed,
        detail,
    )


# -- curvature ---------------------------------------------------------------


def curvatures(params: MarketParams, leader: int = 1) -> Dict[str, Tuple[float, float]]:
    """Finite-difference second derivatives paired with their closed-form values.

    Keys: ``mvno_retail``, ``single_wholesale``, ``fs_leader``, ``ps_1`` and
    ``ps_2``; each maps to ``(finite_difference, closed_form)``.
    """
    d = derive(params)
    a = 1.0 - params.gamma
    e, s = params.eps, d.s
    out: Dict[str, Tuple[float, float]] = {}

    sc = Scenario.part_nonpart(1)
    w_single = solvers.w_tilde_single(params, 1)
    p_mid = params.p2 / 2.0
    out["mvno_retail"] = (
        _second_diff(lambda p: float(mvno_profit(params, sc, p, (w_single, None), check=False)), p_mid),
        -2.0 * e * s,
    )
    out["single_wholesale"] = (
        _second_diff(lambda v: float(solvers.reduced_mno_profit_single(params, 1, v, extend=True)), w_single),
        -e * a * a * s,
    )

    wl0 = solvers.w_tilde_leader(params, leader)

    def along_reaction(v):
        wf = float(solvers.omega_follower(params, leader, v))
        w1, w2 = (v, wf) if leader == 1 else (wf, v)
        return float(solvers.reduced_mno_profit_pair(params, leader, w1, w2, extend=True))

    out["fs_leader"] = (_second_diff(along_reaction, wl0), -e * a * a * d.pi(leader) ** 2 * s / 2.0)

    wc = solvers.point_wC(params)
    for i in (1, 2):
        def own(v, i=i):
            ww = list(wc)
            ww[i - 1] = v
            return float(solvers.reduced_mno_profit_pair(params, i, ww[0], ww[1], extend=True))

        out[f"ps_{i}"] = (_second_diff(own, wc[i - 1]), -e * a * a * d.pi(i) ** 2 * s)
    return out


def curvature_check(params: MarketParams, tol: float = KKT_TOL) -> OracleVerdict:
    cur = curvatures(params)
    gaps = {k: _rel_gap(fd, cf, floor=1e-12) for k, (fd, cf) in cur.items()}
    return OracleVerdict(
        "curvature",
        {k: cf for k, (_, cf) in cur.items()},
        {k: fd for k, (fd, _) in cur.items()},
        gaps,
        {k: tol for k in gaps},
        all(g <= tol for g in gaps.values()),
    )


# -- random markets ----------------------------------------------------------


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_params(rng: np.random.Generator, **fixed) -> MarketParams:
    """Draw a valid market with a nonempty feasible triangle.

    Scale parameters are log-uniform, shares and cost fractions uniform.
    Keyword arguments pin individual fields.
    """
    while True:
        p2 = _log_uniform(rng, 5.0, 100.0)
        p1 = p2 * rng.uniform(1.0, 1.6)
        q1 = _log_uniform(rng, 1e2, 1e5)
        q2 = _log_uniform(rng, 1e2, 1e5)
        c1, c2 = p1 * rng.uniform(0.05, 0.35), p2 * rng.uniform(0.05, 0.35)
        ct1, ct2 = p1 * rng.uniform(0.02, 0.3), p2 * rng.uniform(0.02, 0.3)
        values = dict(
            q1=q1, q2=q2, p1=p1, p2=p2, c1=c1, c2=c2, ct1=ct1, ct2=ct2,
            cf1=rng.uniform(0.0, 0.2) * (p1 - c1 - ct1) * q1,
            cf2=rng.uniform(0.0, 0.2) * (p2 - c2 - ct2) * q2,
            eps=_log_uniform(rng, 0.05, 1.0),
            gamma=rng.uniform(0.0, 0.9),
            r0=p2 * rng.uniform(0.0, 2.0),
            ct0=p2 * rng.uniform(0.0, 0.3),
            cf0=_log_uniform(rng, 1.0, 1e4),
        )
        values.update(fixed)
        try:
            params = MarketParams(**values)
        except ParameterError:
            if fixed:
                raise
            continue
        if solvers.Region.from_params(params).rhs > 0.05 * params.p2:
            return params
        if fixed:
            raise ParameterError("r0", "sampled market has an empty feasible triangle")


# -- full battery ------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    gap: float
    detail: str = ""


def run_all_checks(
    params: MarketParams, grid: GridSpec = GridSpec(), perturb: float = 0.0
) -> List[CheckResult]:
    """Every oracle and first-order check applicable to ``params``.

    ``perturb`` shifts the closed-form prices handed to the brute-force
    comparisons; a nonzero value is a negative control and must fail.
    """
    results: List[CheckResult] = []

    def add_verdict(v: OracleVerdict) -> None:
        results.append(CheckResult(v.name, v.passed, v.max_gap, v.detail))

    def add_kkt(name: str, rep: KKTReport) -> None:
        gap = max(rep.stationarity + (rep.complementary_slackness,))
        if rep.multiplier_identity_gap is not None:
            gap = max(gap, rep.multiplier_identity_gap)
        ok = rep.satisfied and (rep.multiplier_identity_gap is None or rep.multiplier_identity_gap <= KKT_TOL)
        results.append(CheckResult(name, ok, gap, f"multipliers={rep.multipliers}"))

    th = solvers.thresholds(params)
    for i in (1, 2):
        sol = solvers.solve_part_nonpart(params, i)
        wi = sol.w[i - 1] + perturb
        p0_grid, _ = grid_argmax_p0(params, sol.scenario, _wvec(i, wi), grid)
        p0_cf = float(solvers.p0_star_single(params, wi))
        gap = _rel_gap(p0_cf, p0_grid)
        results.append(CheckResult(f"mvno-price-grid-{i}", gap <= PRICE_TOL, gap))
        add_verdict(part_nonpart_oracle(params, i, grid, perturb))
        add_kkt(f"kkt-single-{i}", kkt_residuals_single(params, i, wi))
    for leader in (1, 2):
        sol = solvers.solve_part_part_fs(params, leader)
        add_verdict(bilevel_fs_oracle(params, leader, grid, perturb))
        cand = (sol.w1 + perturb, sol.w2)
        add_kkt(f"kkt-fs-leader-{leader}", kkt_residuals_fs(params, leader, cand))
        add_verdict(fs_boundary_slope_check(params, leader))
    add_verdict(simultaneous_ps_oracle(params, grid, perturb))
    ps = solvers.solve_part_part_ps(params)
    if ps.feasible:
        add_kkt("kkt-ps", kkt_residuals_ps(params, (ps.w1 + perturb, ps.w2)))
    else:
        add_kkt("kkt-ps-wA", kkt_residuals_ps(params, solvers.point_wA(params)))
        add_kkt("kkt-ps-wB", kkt_residuals_ps(params, solvers.point_wB(params)))
        if params.r0 < th.r_flat_0:
            add_verdict(ps_phi_linearity_check(params))
    add_verdict(curvature_check(params))
    return results
