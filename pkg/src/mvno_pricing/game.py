"""The 2x2 partnership game between the two MNOs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import solvers
from .market import DEFAULT_TOL, MarketParams

PART = "Part"
NONPART = "NonPart"
STRATEGIES = (PART, NONPART)

Profile = Tuple[str, str]


@dataclass(frozen=True)
class Cell:
    r1: float
    r2: float
    source: str


@dataclass(frozen=True)
class PayoffMatrix:
    cells: Dict[Profile, Cell]
    fs_leader: Optional[int] = None

    def payoff(self, profile: Profile, player: int) -> float:
        cell = self.cells[profile]
        return cell.r1 if player == 1 else cell.r2

    @classmethod
    def from_payoffs(cls, payoffs: Dict[Profile, Tuple[float, float]]) -> "PayoffMatrix":
        """Build a matrix from bare ``(R1, R2)`` pairs, e.g. for hand-made games."""
        return cls({k: Cell(float(v[0]), float(v[1]), "given") for k, v in payoffs.items()})


@dataclass
class EquilibriumReport:
    equilibria: List[Profile]
    margins: Dict[Profile, Tuple[float, float]]
    r0_below_r_bar_0: Optional[bool] = None
    r0_below_r_bar_20: Optional[bool] = None
    fs_prices_above_cost: Optional[bool] = None
    single_price_above_cost: Optional[bool] = None
    customer_loss_holds: Optional[bool] = None
    hypothesis_a: Optional[bool] = None
    hypothesis_b: Optional[bool] = None
    customer_loss: Dict[int, Tuple[float, float, bool]] = field(default_factory=dict)

    @property
    def unique(self) -> Optional[Profile]:
        return self.equilibria[0] if len(self.equilibria) == 1 else None


def default_leader(params: MarketParams) -> int:
    """MNO with the larger market share (MNO 1 on ties)."""
    return 1 if params.q1 >= params.q2 else 2


def build_payoff_matrix(params: MarketParams, fs_leader: Optional[int] = None) -> PayoffMatrix:
    """Payoffs of both MNOs for every partnership profile.

    Both-partner payoffs come from the fully sequential model; a single
    partner's payoffs (and its rival's) come from the single-partner optimum;
    without a partner the MVNO does not enter.
    """
    leader = default_leader(params) if fs_leader is None else fs_leader
    fs = solvers.solve_part_part_fs(params, leader)
    only1 = solvers.solve_part_nonpart(params, 1)
    only2 = solvers.solve_part_nonpart(params, 2)
    none = solvers.solve_no_entry(params)
    cells = {
        (PART, PART): Cell(fs.profit_mno1, fs.profit_mno2, f"part-part-fs(leader={leader})"),
        (PART, NONPART): Cell(only1.profit_mno1, only1.profit_mno2, "part-nonpart-1"),
        (NONPART, PART): Cell(only2.profit_mno1, only2.profit_mno2, "part-nonpart-2"),
        (NONPART, NONPART): Cell(none.profit_mno1, none.profit_mno2, "nonpart-nonpart"),
    }
    return PayoffMatrix(cells, leader)


def _flip(s: str) -> str:
    return NONPART if s == PART else PART


def find_pure_nash(matrix: PayoffMatrix, tol: Optional[float] = None) -> EquilibriumReport:
    """Enumerate pure equilibria by checking both unilateral deviations of every profile.

    A profile's margin for a player is its payoff minus what it would get by
    switching; zero margins count as equilibria. ``tol`` defaults to 1e-9
    times the largest absolute payoff.
    """
    if tol is None:
        scale = max(max(abs(c.r1), abs(c.r2)) for c in matrix.cells.values())
        tol = DEFAULT_TOL * max(scale, 1.0)
    margins: Dict[Profile, Tuple[float, float]] = {}
    equilibria: List[Profile] = []
    for s1 in STRATEGIES:
        for s2 in STRATEGIES:
            m1 = matrix.payoff((s1, s2), 1) - matrix.payoff((_flip(s1), s2), 1)
            m2 = matrix.payoff((s1, s2), 2) - matrix.payoff((s1, _flip(s2)), 2)
            margins[(s1, s2)] = (m1, m2)
            if m1 >= -tol and m2 >= -tol:
                equilibria.append((s1, s2))
    return EquilibriumReport(equilibria, margins)


def customer_loss_check(
    params: MarketParams, fs_leader: int, mno: int, tol: float = DEFAULT_TOL
) -> Tuple[float, float, bool]:
    """Customers MNO ``mno`` loses as a partner versus as the lone non-partner.

    Returns ``(lost_as_partner, lost_as_nonpartner, holds)``. The comparison
    is only guaranteed when r0 does not exceed the sequential threshold;
    callers check that hypothesis separately.
    """
    fs = solvers.solve_part_part_fs(params, fs_leader)
    rival = solvers.solve_part_nonpart(params, 3 - mno)
    d_part = float(fs.flows.d1 if mno == 1 else fs.flows.d2)
    d_nonpart = float(rival.flows.d1 if mno == 1 else rival.flows.d2)
    scale = max(1.0, params.q(mno))
    return d_part, d_nonpart, d_nonpart >= d_part - tol * scale


def partnership_report(params: MarketParams, fs_leader: Optional[int] = None) -> EquilibriumReport:
    """Pure equilibria together with the sufficient conditions for partnering.

    Hypothesis (a): r0 at most the sequential threshold and both sequential
    wholesale prices at least the network costs; then (Part, Part) is an
    equilibrium. Hypothesis (b) adds r0 at most MNO 2's single-partner
    threshold and MNO 2's single-partner price at least its network cost; then
    (Part, Part) is the only equilibrium. When a hypothesis fails nothing is
    claimed and the raw enumeration is still reported.
    """
    leader = default_leader(params) if fs_leader is None else fs_leader
    matrix = build_payoff_matrix(params, leader)
    report = find_pure_nash(matrix)
    th = solvers.thresholds(params)
    fs = solvers.solve_part_part_fs(params, leader)
    only2 = solvers.solve_part_nonpart(params, 2)
    report.r0_below_r_bar_0 = params.r0 <= th.r_bar_0
    report.r0_below_r_bar_20 = params.r0 <= th.r_bar_20
    report.fs_prices_above_cost = fs.w1 >= params.c1 and fs.w2 >= params.c2
    report.single_price_above_cost = only2.w2 >= params.c2
    report.customer_loss = {i: customer_loss_check(params, leader, i) for i in (1, 2)}
    report.customer_loss_holds = all(v[2] for v in report.customer_loss.values())
    report.hypothesis_a = report.r0_below_r_bar_0 and report.fs_prices_above_cost
    report.hypothesis_b = bool(
        report.hypothesis_a and report.r0_below_r_bar_20 and report.single_price_above_cost
    )
    return report


def conclusions_consistent(report: EquilibriumReport) -> bool:
    """True unless a hypothesis holds while its conclusion fails."""
    if report.hypothesis_a and (PART, PART) not in report.equilibria:
        return False
    if report.hypothesis_b and report.equilibria != [(PART, PART)]:
        return False
    return True
