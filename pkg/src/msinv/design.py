"""Inclusion probabilities for the three sampling stages.

Stage I is stratified cluster sampling of facilities (every component at a
sampled facility is surveyed), stage II a per-component simple random sample
of survey days out of the inventory horizon, and stage III Poisson sampling
where a pass "responds" with its probability of detection.  The modified
(starred) design conditions stage II on at-least-one detection so that ratio
estimators are always defined; its probabilities are derived from the
originals here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .frame import ComponentRef, StratumDef
from .pod import phi_any_detection

__all__ = [
    "DesignError",
    "StageOnePlan",
    "StageTwoPlan",
    "StageThreePlan",
    "ModifiedPlan",
    "stage1_pi",
    "stage1_pi_joint",
    "stage2_pi",
    "stage2_pi_joint",
    "modified_plan",
]


class DesignError(ValueError):
    """A unit was asked about that the plan does not cover."""


@dataclass(frozen=True)
class StageOnePlan:
    """Stratified SRS of facilities with fixed per-stratum sample sizes."""

    strata: dict[str, StratumDef]

    def fraction(self, stratum: str) -> float:
        try:
            s = self.strata[stratum]
        except KeyError:
            raise DesignError(f"unknown stratum {stratum!r}") from None
        return s.n_sampled / s.n_population


@dataclass(frozen=True)
class StageTwoPlan:
    """SRS of d_p survey days out of a horizon of D days.

    ``mode`` is either ``"observed"`` (D = d_p per component, a census of the
    surveyed days) or ``"fixed"`` (one horizon, default a year).
    """

    mode: str
    days_surveyed: dict[str, int]
    sampled_days: dict[str, frozenset[int]]
    horizon: int = 365

    def __post_init__(self):
        if self.mode not in {"observed", "fixed"}:
            raise DesignError(f"stage II mode must be 'observed' or 'fixed', got {self.mode!r}")
        if self.horizon < 1:
            raise DesignError("horizon must be a positive number of days")
        for comp, d in self.days_surveyed.items():
            if self.mode == "fixed" and d > self.horizon:
                raise DesignError(
                    f"component {comp!r}: d_p={d} exceeds horizon D={self.horizon}"
                )

    def horizon_for(self, component_id: str) -> int:
        d = self._d(component_id)
        return d if self.mode == "observed" else self.horizon

    def _d(self, component_id: str) -> int:
        try:
            return self.days_surveyed[component_id]
        except KeyError:
            raise DesignError(f"unknown component {component_id!r}") from None

    def _check_day(self, component_id: str, day: int):
        if day not in self.sampled_days.get(component_id, frozenset()):
            raise DesignError(f"day {day} was not sampled for component {component_id!r}")


@dataclass(frozen=True)
class StageThreePlan:
    """Per-pass detection probabilities, keyed by (component_id, day_id).

    ``pass_phis`` holds the detected passes' PODs in pass order and
    ``n_missed`` the count of non-detected passes, from which the estimated
    any-detection probability per component-day is derived.
    """

    pass_phis: dict[tuple[str, int], tuple[float, ...]]
    n_missed: dict[tuple[str, int], int] = field(default_factory=dict)

    def phi_hat(self, component_id: str, day: int) -> float:
        key = (component_id, day)
        if key not in self.pass_phis:
            raise DesignError(f"no stage III information for {key}")
        return phi_any_detection(self.pass_phis[key], self.n_missed.get(key, 0))


def stage1_pi(component: ComponentRef, plan: StageOnePlan) -> float:
    """First-order stage I inclusion probability n_h / N_h."""
    return plan.fraction(component.stratum)


def stage1_pi_joint(p: ComponentRef, l: ComponentRef, plan: StageOnePlan) -> float:
    """Joint stage I probability for two components.

    Same facility: the pair is sampled together (cluster), so n/N.  Same
    stratum, different facilities: SRS-without-replacement pairs,
    n(n-1)/(N(N-1)).  Different strata: independent, product of marginals.
    """
    if p.facility_id == l.facility_id:
        if p.stratum != l.stratum:
            raise DesignError(
                f"components {p.component_id!r}, {l.component_id!r} share a facility "
                "but not a stratum"
            )
        return plan.fraction(p.stratum)
    if p.stratum == l.stratum:
        s = plan.strata[p.stratum] if p.stratum in plan.strata else None
        if s is None:
            raise DesignError(f"unknown stratum {p.stratum!r}")
        n, big_n = s.n_sampled, s.n_population
        if big_n == 1:
            return plan.fraction(p.stratum)
        return n * (n - 1) / (big_n * (big_n - 1))
    return plan.fraction(p.stratum) * plan.fraction(l.stratum)


def stage2_pi(component_id: str, day: int, plan: StageTwoPlan) -> float:
    """First-order stage II probability d_p / D."""
    plan._check_day(component_id, day)
    return plan._d(component_id) / plan.horizon_for(component_id)


def stage2_pi_joint(component_id: str, day_t: int, day_u: int, plan: StageTwoPlan) -> float:
    """Joint stage II probability; d_p(d_p-1)/(D(D-1)) for distinct days."""
    plan._check_day(component_id, day_t)
    plan._check_day(component_id, day_u)
    d = plan._d(component_id)
    big_d = plan.horizon_for(component_id)
    if day_t == day_u:
        return d / big_d
    if big_d == 1:
        raise DesignError("two distinct days cannot be drawn from a one-day horizon")
    return d * (d - 1) / (big_d * (big_d - 1))


@dataclass(frozen=True)
class ModifiedPlan:
    """Starred design: stage II conditioned on at-least-one detection.

    Day marginals become phi_hat * pi_t; within a detection day, pass
    inclusion becomes phi_q / phi_hat and pairs phi_q phi_r / phi_hat, which
    is no longer Poisson.
    """

    stage2: StageTwoPlan
    stage3: StageThreePlan

    def _phi_hat(self, component_id: str, day: int) -> float:
        return self.stage3.phi_hat(component_id, day)

    def stage2_pi(self, component_id: str, day: int) -> float:
        return self._phi_hat(component_id, day) * stage2_pi(component_id, day, self.stage2)

    def stage2_pi_joint(self, component_id: str, day_t: int, day_u: int) -> float:
        base = stage2_pi_joint(component_id, day_t, day_u, self.stage2)
        if day_t == day_u:
            return self._phi_hat(component_id, day_t) * base
        return self._phi_hat(component_id, day_t) * self._phi_hat(component_id, day_u) * base

    def stage3_pi(self, component_id: str, day: int, phi_q: float) -> float:
        return phi_q / self._phi_hat(component_id, day)

    def stage3_pi_joint(
        self, component_id: str, day: int, phi_q: float, phi_r: float, same: bool = False
    ) -> float:
        if same:
            return self.stage3_pi(component_id, day, phi_q)
        return phi_q * phi_r / self._phi_hat(component_id, day)


def modified_plan(stage2: StageTwoPlan, stage3: StageThreePlan) -> ModifiedPlan:
    """Bundle the starred design for a frame's stage II/III plans."""
    return ModifiedPlan(stage2=stage2, stage3=stage3)
