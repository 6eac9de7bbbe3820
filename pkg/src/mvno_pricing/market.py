"""Market primitives for the two-MNO / one-MVNO wholesale market.

Exogenous parameters, derived constants, customer defection, MVNO traffic
split and the profit of every actor. All functions accept numpy arrays for
prices so the verification grids can evaluate them in bulk.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Sequence, Union

import numpy as np

DEFAULT_TOL = 1e-9
MAX_GAMMA = 0.999

ArrayLike = Union[float, np.ndarray]


class ParameterError(ValueError):
    """Raised when market parameters or prices violate a model invariant.

    ``field`` names the offending parameter so callers (the CLI) can report
    exactly which constraint failed.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass(frozen=True)
class MarketParams:
    """Exogenous market constants.

    Customer bases are raw subscriber counts, prices and costs are per
    subscriber and per period. ``p2 <= p1`` is a standing assumption: MNO 2
    is always the cheaper operator.
    """

    q1: float
    q2: float
    p1: float
    p2: float
    c1: float
    c2: float
    ct1: float
    ct2: float
    cf1: float
    cf2: float
    eps: float
    gamma: float
    r0: float
    ct0: float
    cf0: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParameterError(f.name, f"expected a number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(f.name, "must be finite")
            object.__setattr__(self, f.name, float(value))
        if self.q1 <= 0:
            raise ParameterError("q1", "customer base must be positive")
        if self.q2 <= 0:
            raise ParameterError("q2", "customer base must be positive")
        if self.eps <= 0:
            raise ParameterError("eps", "elasticity must be positive")
        if not 0.0 <= self.gamma <= MAX_GAMMA:
            raise ParameterError("gamma", f"WiFi share must lie in [0, {MAX_GAMMA}]")
        for name in ("p1", "p2"):
            if getattr(self, name) <= 0:
                raise ParameterError(name, "retail price must be positive")
        for name in ("c1", "c2", "ct1", "ct2", "cf1", "cf2", "r0", "ct0", "cf0"):
            if getattr(self, name) < 0:
                raise ParameterError(name, "must be nonnegative")
        if self.p2 > self.p1:
            raise ParameterError("p2", "MNO 2 must be the cheaper operator (p2 <= p1)")
        if self.p1 - self.c1 - self.ct1 < 0:
            raise ParameterError("c1", "unit margin h1 = p1 - c1 - ct1 is negative")
        if self.p2 - self.c2 - self.ct2 < 0:
            raise ParameterError("c2", "unit margin h2 = p2 - c2 - ct2 is negative")

    @classmethod
    def from_mapping(cls, data: dict) -> "MarketParams":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ParameterError(unknown[0], "unknown market parameter")
        missing = sorted(names - set(data))
        if missing:
            raise ParameterError(missing[0], "missing market parameter")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "MarketParams":
        return replace(self, **changes)

    def swapped(self) -> "MarketParams":
        """Swap the labels of the two MNOs (only valid when p1 == p2)."""
        return replace(
            self,
            q1=self.q2, q2=self.q1, p1=self.p2, p2=self.p1,
            c1=self.c2, c2=self.c1, ct1=self.ct2, ct2=self.ct1,
            cf1=self.cf2, cf2=self.cf1,
        )

    @property
    def derived(self) -> "DerivedQuantities":
        return derive(self)

    # per-MNO accessors, indexed by MNO id 1 or 2
    def q(self, i: int) -> float:
        return self.q1 if _mno(i) == 1 else self.q2

    def p(self, i: int) -> float:
        return self.p1 if _mno(i) == 1 else self.p2

    def c(self, i: int) -> float:
        return self.c1 if _mno(i) == 1 else self.c2

    def cf(self, i: int) -> float:
        return self.cf1 if _mno(i) == 1 else self.cf2


def reference_params() -> MarketParams:
    """The reference market P0 used throughout the tests and the CLI."""
    return MarketParams(
        q1=600, q2=400, p1=40, p2=30, c1=8, c2=6, ct1=4, ct2=3,
        cf1=0, cf2=0, eps=0.5, gamma=0.4, r0=10, ct0=2, cf0=0,
    )


@dataclass(frozen=True)
class DerivedQuantities:
    q_total: float
    pi1: float
    pi2: float
    s: float
    h1: float
    h2: float
    t: float

    def pi(self, i: int) -> float:
        return self.pi1 if _mno(i) == 1 else self.pi2

    def h(self, i: int) -> float:
        return self.h1 if _mno(i) == 1 else self.h2


def derive(params: MarketParams) -> DerivedQuantities:
    q_total = params.q1 + params.q2
    pi1 = params.q1 / q_total
    s = params.q1 / params.p1 + params.q2 / params.p2
    return DerivedQuantities(
        q_total=q_total,
        pi1=pi1,
        pi2=1.0 - pi1,
        s=s,
        h1=params.p1 - params.c1 - params.ct1,
        h2=params.p2 - params.c2 - params.ct2,
        t=q_total + (params.r0 - params.ct0) * s,
    )


class ScenarioKind(str, enum.Enum):
    PART_NONPART = "part-nonpart"
    PART_PART_FS = "part-part-fs"
    PART_PART_PS = "part-part-ps"
    NONPART_NONPART = "nonpart-nonpart"


@dataclass(frozen=True)
class Scenario:
    """Partnership configuration.

    ``mno`` is the single partner for Part-NonPart, the leader for the fully
    sequential model and ``None`` otherwise.
    """

    kind: ScenarioKind
    mno: Optional[int] = None

    def __post_init__(self) -> None:
        kind = ScenarioKind(self.kind)
        object.__setattr__(self, "kind", kind)
        needs_mno = kind in (ScenarioKind.PART_NONPART, ScenarioKind.PART_PART_FS)
        if needs_mno:
            _mno(self.mno)
        elif self.mno is not None:
            raise ValueError(f"scenario {kind.value} takes no MNO id")

    @classmethod
    def part_nonpart(cls, partner: int) -> "Scenario":
        return cls(ScenarioKind.PART_NONPART, partner)

    @classmethod
    def part_part_fs(cls, leader: int) -> "Scenario":
        return cls(ScenarioKind.PART_PART_FS, leader)

    @classmethod
    def part_part_ps(cls) -> "Scenario":
        return cls(ScenarioKind.PART_PART_PS)

    @classmethod
    def nonpart_nonpart(cls) -> "Scenario":
        return cls(ScenarioKind.NONPART_NONPART)

    @property
    def both_partner(self) -> bool:
        return self.kind in (ScenarioKind.PART_PART_FS, ScenarioKind.PART_PART_PS)

    def is_partner(self, i: int) -> bool:
        if self.kind is ScenarioKind.NONPART_NONPART:
            return False
        if self.kind is ScenarioKind.PART_NONPART:
            return self.mno == _mno(i)
        return True

    @property
    def label(self) -> str:
        if self.kind is ScenarioKind.PART_NONPART:
            return f"part-nonpart-{self.mno}"
        return self.kind.value


@dataclass(frozen=True)
class CustomerFlows:
    d1: ArrayLike
    d2: ArrayLike
    q0: ArrayLike
    wifi_traffic: ArrayLike
    mno1_traffic: ArrayLike
    mno2_traffic: ArrayLike


def _mno(i) -> int:
    if i not in (1, 2) or isinstance(i, bool):
        raise ValueError(f"MNO id must be 1 or 2, got {i!r}")
    return int(i)


def defection(qi: float, pi: float, p0: ArrayLike, eps: float, check: bool = True) -> ArrayLike:
    """Subscribers leaving an MNO with price ``pi`` for an MVNO priced ``p0``.

    Linear in the relative price gap: ``eps * qi * (pi - p0) / pi``. With
    ``check=False`` the same affine expression is evaluated outside
    ``0 <= p0 <= pi``; the oracles use that quadratic extension.
    """
    if pi <= 0:
        raise ParameterError("p", "retail price must be positive")
    if check:
        arr = np.asarray(p0)
        if np.any(arr > pi):
            raise ParameterError("p0", f"MVNO price exceeds MNO price {pi}")
        if np.any(arr < 0):
            raise ParameterError("p0", "MVNO price must be nonnegative")
    return eps * qi * (pi - p0) / pi


def _check_p0(params: MarketParams, p0: ArrayLike) -> None:
    arr = np.asarray(p0)
    if np.any(arr < 0) or np.any(arr > params.p2):
        raise ParameterError("p0", f"MVNO price must lie in [0, p2={params.p2}]")


def customer_flows(
    params: MarketParams, scenario: Scenario, p0: ArrayLike, check: bool = True
) -> CustomerFlows:
    if scenario.kind is ScenarioKind.NONPART_NONPART:
        raise ValueError("no MVNO enters the market without a partner")
    if check:
        _check_p0(params, p0)
    d1 = defection(params.q1, params.p1, p0, params.eps, check=False)
    d2 = defection(params.q2, params.p2, p0, params.eps, check=False)
    q0 = d1 + d2
    cellular = (1.0 - params.gamma) * q0
    if scenario.kind is ScenarioKind.PART_NONPART:
        zero = 0.0 * q0
        t1, t2 = (cellular, zero) if scenario.mno == 1 else (zero, cellular)
    else:
        d = derive(params)
        t1, t2 = cellular * d.pi1, cellular * d.pi2
    return CustomerFlows(
        d1=d1, d2=d2, q0=q0,
        wifi_traffic=params.gamma * q0, mno1_traffic=t1, mno2_traffic=t2,
    )


def _wholesale_unit_cost(params: MarketParams, scenario: Scenario, w: Sequence) -> ArrayLike:
    """Average wholesale price the MVNO pays per carried subscriber."""
    if scenario.kind is ScenarioKind.PART_NONPART:
        wi = w[scenario.mno - 1]
        if wi is None:
            raise ValueError(f"wholesale price of partner MNO {scenario.mno} is missing")
        return wi
    if w[0] is None or w[1] is None:
        raise ValueError("both wholesale prices are required when both MNOs partner")
    d = derive(params)
    return d.pi1 * w[0] + d.pi2 * w[1]


def mvno_profit(
    params: MarketParams, scenario: Scenario, p0: ArrayLike, w: Sequence, check: bool = True
) -> ArrayLike:
    """MVNO profit at retail price ``p0`` and wholesale vector ``w = (w1, w2)``.

    Only the partner's component of ``w`` is read in Part-NonPart; the other
    entry may be ``None``.
    """
    flows = customer_flows(params, scenario, p0, check=check)
    unit = _wholesale_unit_cost(params, scenario, w)
    g = params.gamma
    return (p0 + params.r0 - params.ct0 - (1.0 - g) * unit) * flows.q0 - params.cf0


def mno_profit(
    params: MarketParams,
    scenario: Scenario,
    mno: int,
    p0: ArrayLike = None,
    w: Optional[Sequence] = None,
    check: bool = True,
) -> ArrayLike:
    """Profit of MNO ``mno`` in the given scenario.

    A partner earns its retail margin on the customers it keeps plus the
    wholesale margin on the MVNO traffic it carries; a non-partner keeps only
    the retail margin. Without an MVNO the profit is ``h_i Q_i - Cf_i``.
    """
    i = _mno(mno)
    d = derive(params)
    hi, qi, ci = d.h(i), params.q(i), params.c(i)
    if scenario.kind is ScenarioKind.NONPART_NONPART:
        return hi * qi - params.cf(i)
    if check:
        _check_p0(params, p0)
    flows = customer_flows(params, scenario, p0, check=False)
    lost = flows.d1 if i == 1 else flows.d2
    profit = hi * (qi - lost) - params.cf(i)
    if scenario.is_partner(i):
        wi = w[i - 1]
        if wi is None:
            raise ValueError(f"wholesale price of partner MNO {i} is missing")
        carried = flows.mno1_traffic if i == 1 else flows.mno2_traffic
        profit = profit + (wi - ci) * carried
    return profit
