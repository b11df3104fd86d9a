"""Domain types for reliability-constrained generation expansion planning.

A planning instance (:class:`SystemSpec`) holds the generator fleet --
existing units plus investment candidates -- a per-period demand profile and
the load-shedding penalty.  Decisions are binary build schedules
(:class:`InvestmentPlan`): once a candidate is built it stays built.
Reliability targets are a :class:`ReliabilityCriterion` limiting one shedding
risk metric in every period, expressed as a fraction of that period's demand.

Internally every formula ranges over a single generator set: existing units
behave like candidates whose build variable is pinned to one, which is what
:func:`unit_availability` materializes.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InstanceError

EXISTING = "existing"
CANDIDATE = "candidate"


class Metric(str, enum.Enum):
    """Shedding risk metrics a criterion can constrain."""

    LOLP = "lolp"
    EPNS = "epns"
    VAR = "var"
    CVAR = "cvar"


@dataclass(frozen=True)
class Generator:
    """One generating unit, existing or candidate.

    ``capacity_mw`` is installed capacity; the derated value used by the
    economic dispatch is ``(1 - outage_prob) * capacity_mw``.  ``var_cost``
    is $ per MW and period, ``invest_cost`` a one-time $ charge (zero exactly
    for existing units).  ``earliest_period`` (1-based) is the first period a
    candidate may operate; it is ignored for existing units.
    """

    id: str
    kind: str
    capacity_mw: float
    outage_prob: float
    var_cost: float
    invest_cost: float = 0.0
    earliest_period: int = 1

    def __post_init__(self):
        if self.kind not in (EXISTING, CANDIDATE):
            raise InstanceError(f"generator {self.id!r}: unknown kind {self.kind!r}")
        if not (self.capacity_mw > 0) or not math.isfinite(self.capacity_mw):
            raise InstanceError(f"generator {self.id!r}: capacity_mw must be > 0")
        if not (0.0 <= self.outage_prob <= 1.0):
            raise InstanceError(f"generator {self.id!r}: outage_prob must be in [0, 1]")
        if self.var_cost < 0 or not math.isfinite(self.var_cost):
            raise InstanceError(f"generator {self.id!r}: var_cost must be >= 0")
        if self.invest_cost < 0 or not math.isfinite(self.invest_cost):
            raise InstanceError(f"generator {self.id!r}: invest_cost must be >= 0")
        # invest_cost == 0 exactly when the unit already exists
        if self.kind == EXISTING and self.invest_cost != 0.0:
            raise InstanceError(f"generator {self.id!r}: existing units have invest_cost 0")
        if self.kind == CANDIDATE and self.invest_cost == 0.0:
            raise InstanceError(f"generator {self.id!r}: candidates need invest_cost > 0")
        if self.earliest_period < 1:
            raise InstanceError(f"generator {self.id!r}: earliest_period must be >= 1")

    @property
    def derated_mw(self) -> float:
        return (1.0 - self.outage_prob) * self.capacity_mw


@dataclass(frozen=True)
class SystemSpec:
    """A complete planning instance."""

    generators: tuple
    periods: int
    demand_mw: tuple
    shed_cost: float

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "demand_mw", tuple(float(d) for d in self.demand_mw))
        if self.periods < 1:
            raise InstanceError("periods must be >= 1")
        if len(self.demand_mw) != self.periods:
            raise InstanceError(
                f"demand_mw has {len(self.demand_mw)} entries for {self.periods} periods"
            )
        if any(d < 0 or not math.isfinite(d) for d in self.demand_mw):
            raise InstanceError("demands must be finite and >= 0")
        if not math.isfinite(self.shed_cost) or self.shed_cost <= 0:
            raise InstanceError("shed_cost must be positive")
        seen = set()
        for g in self.generators:
            if g.id in seen:
                raise InstanceError(f"duplicate generator id {g.id!r}")
            seen.add(g.id)
            if g.var_cost >= self.shed_cost:
                raise InstanceError(
                    f"generator {g.id!r}: var_cost must be < shed_cost "
                    "(shedding is the last resort)"
                )

    @cached_property
    def n_generators(self) -> int:
        return len(self.generators)

    @cached_property
    def capacity(self) -> np.ndarray:
        """Installed capacity per generator (MW)."""
        a = np.array([g.capacity_mw for g in self.generators], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def outage_prob(self) -> np.ndarray:
        a = np.array([g.outage_prob for g in self.generators], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def derated(self) -> np.ndarray:
        """Capacity scaled by average availability, per generator (MW)."""
        a = (1.0 - self.outage_prob) * self.capacity
        a.setflags(write=False)
        return a

    @cached_property
    def var_cost(self) -> np.ndarray:
        a = np.array([g.var_cost for g in self.generators], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def candidate_positions(self) -> tuple:
        """Indices into ``generators`` of the candidate units, in order."""
        return tuple(i for i, g in enumerate(self.generators) if g.kind == CANDIDATE)

    @cached_property
    def candidates(self) -> tuple:
        return tuple(self.generators[i] for i in self.candidate_positions)

    @cached_property
    def candidate_ids(self) -> tuple:
        return tuple(g.id for g in self.candidates)

    @property
    def n_candidates(self) -> int:
        return len(self.candidate_positions)


@dataclass(frozen=True, eq=False)
class InvestmentPlan:
    """Binary build schedule over (candidate, period).

    ``built[j, t] == 1`` means candidate ``j`` (in ``spec.candidate_ids``
    order) is operational in period ``t`` (0-based).  Rows are monotone --
    once built, a unit stays built -- and zero before the candidate's
    earliest period.  Use :func:`new_plan` to construct a validated plan.
    """

    built: np.ndarray
    candidate_ids: tuple

    def __post_init__(self):
        b = np.ascontiguousarray(self.built, dtype=np.uint8)
        b.setflags(write=False)
        object.__setattr__(self, "built", b)
        object.__setattr__(self, "candidate_ids", tuple(self.candidate_ids))

    def __eq__(self, other):
        if not isinstance(other, InvestmentPlan):
            return NotImplemented
        return (
            self.candidate_ids == other.candidate_ids
            and self.built.shape == other.built.shape
            and bool(np.array_equal(self.built, other.built))
        )

    def __hash__(self):
        return hash((self.candidate_ids, self.built.shape, self.built.tobytes()))

    def key(self) -> bytes:
        """Stable identity of the build pattern, for repeat detection."""
        return self.built.tobytes()

    def built_ever(self, j: int) -> bool:
        return bool(self.built[j].any())

    def first_period(self, j: int):
        """0-based first built period of candidate ``j``, or None."""
        nz = np.flatnonzero(self.built[j])
        return int(nz[0]) if nz.size else None

    def as_lists(self):
        return [[int(v) for v in row] for row in self.built]


def new_plan(spec: SystemSpec, built) -> InvestmentPlan:
    """Validate a build matrix against ``spec`` and wrap it as a plan."""
    b = np.asarray(built, dtype=float)
    if b.ndim != 2 or b.shape != (spec.n_candidates, spec.periods):
        raise InstanceError(
            f"plan shape {b.shape} does not match "
            f"({spec.n_candidates} candidates, {spec.periods} periods)"
        )
    if not np.isin(b, (0.0, 1.0)).all():
        raise InstanceError("plan entries must be 0 or 1")
    if (np.diff(b, axis=1) < 0).any():
        raise InstanceError("plan must be monotone: once built, a unit stays built")
    for j, g in enumerate(spec.candidates):
        first = g.earliest_period - 1
        if first > 0 and b[j, : min(first, spec.periods)].any():
            raise InstanceError(
                f"candidate {g.id!r} built before its earliest period {g.earliest_period}"
            )
    return InvestmentPlan(built=b.astype(np.uint8), candidate_ids=spec.candidate_ids)


def empty_plan(spec: SystemSpec) -> InvestmentPlan:
    return new_plan(spec, np.zeros((spec.n_candidates, spec.periods)))


def full_plan(spec: SystemSpec) -> InvestmentPlan:
    """Every candidate built from its earliest feasible period on."""
    b = np.zeros((spec.n_candidates, spec.periods))
    for j, g in enumerate(spec.candidates):
        b[j, g.earliest_period - 1 :] = 1.0
    return new_plan(spec, b)


def _check_plan(spec: SystemSpec, plan: InvestmentPlan):
    if plan.candidate_ids != spec.candidate_ids or plan.built.shape != (
        spec.n_candidates,
        spec.periods,
    ):
        raise InstanceError("plan does not index the candidates of this spec")


def plan_invest_cost(spec: SystemSpec, plan: InvestmentPlan) -> float:
    """Total investment cost: a one-time, undiscounted charge per candidate
    that is built in any period."""
    _check_plan(spec, plan)
    return float(
        sum(g.invest_cost for j, g in enumerate(spec.candidates) if plan.built_ever(j))
    )


def unit_availability(spec: SystemSpec, plan: InvestmentPlan) -> np.ndarray:
    """(n_generators, periods) matrix of build availability: existing rows
    are all ones, candidate rows copy the plan."""
    _check_plan(spec, plan)
    avail = np.ones((spec.n_generators, spec.periods), dtype=float)
    for j, pos in enumerate(spec.candidate_positions):
        avail[pos] = plan.built[j]
    return avail


def relaxed_availability(spec: SystemSpec, x, period: int) -> np.ndarray:
    """Per-generator availability vector for one period with candidate
    builds relaxed to fractions ``x`` in [0, 1] (shape (n_candidates,))."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n_candidates,):
        raise InstanceError(f"expected {spec.n_candidates} candidate fractions")
    if period < 0 or period >= spec.periods:
        raise InstanceError(f"period {period} out of range")
    avail = np.ones(spec.n_generators, dtype=float)
    for j, pos in enumerate(spec.candidate_positions):
        avail[pos] = x[j]
    return avail


def available_capacity(spec: SystemSpec, plan: InvestmentPlan, period: int, state) -> float:
    """Capacity on line in ``period`` under outage ``state``: the sum of
    installed capacity over units that are up and built (existing units
    count as built)."""
    _check_plan(spec, plan)
    if period < 0 or period >= spec.periods:
        raise InstanceError(f"period {period} out of range")
    up = np.asarray(getattr(state, "up", state), dtype=float)
    if up.shape != (spec.n_generators,):
        raise InstanceError("state must have one entry per generator")
    avail = np.ones(spec.n_generators, dtype=float)
    for j, pos in enumerate(spec.candidate_positions):
        avail[pos] = plan.built[j, period]
    return float(np.dot(up * avail, spec.capacity))


@dataclass(frozen=True)
class ReliabilityCriterion:
    """A per-period limit on one risk metric.

    ``limit_frac`` scales each period's demand into the metric limit: an
    EPNS/VaR/CVaR limit of ``limit_frac * demand_mw[t]`` MW.  For LOLP,
    which is a probability, ``limit_frac`` is the probability bound itself.
    ``alpha`` is the tail mass for VaR/CVaR (ignored by LOLP/EPNS but kept
    for reporting the tail metrics of any plan).
    """

    metric: Metric
    limit_frac: float
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric(self.metric))
        if not (0.0 <= self.limit_frac <= 1.0):
            raise InstanceError("limit_frac must be in [0, 1]")
        if not (0.0 < self.alpha <= 1.0):
            raise InstanceError("alpha must be in (0, 1]")

    def limit_mw(self, spec: SystemSpec, period: int) -> float:
        """Absolute limit for one period (MW, or probability for LOLP)."""
        if self.metric is Metric.LOLP:
            return self.limit_frac
        return self.limit_frac * spec.demand_mw[period]


@dataclass(frozen=True)
class PlanReport:
    """Costs and per-period risk metrics of one evaluated plan."""

    invest_cost: float
    oper_cost: float
    total_cost: float
    lolp: tuple
    epns_mw: tuple
    var_mw: tuple
    cvar_mw: tuple
    alpha: float
    violated_periods: int

    def __post_init__(self):
        for name in ("lolp", "epns_mw", "var_mw", "cvar_mw"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if abs(self.total_cost - (self.invest_cost + self.oper_cost)) > 1e-6 * (
            1.0 + abs(self.total_cost)
        ):
            raise InstanceError("total_cost must equal invest_cost + oper_cost")

    def to_dict(self):
        return {
            "invest_cost": self.invest_cost,
            "oper_cost": self.oper_cost,
            "total_cost": self.total_cost,
            "lolp": list(self.lolp),
            "epns_mw": list(self.epns_mw),
            "var_mw": list(self.var_mw),
            "cvar_mw": list(self.cvar_mw),
            "alpha": self.alpha,
            "violated_periods": self.violated_periods,
        }
