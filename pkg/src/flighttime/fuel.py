"""Fuel-loading policy simulation: proposed loadings, benefits, risk, conversions.

The proposed loading keeps the planner's taxi and fixed (alternate + reserve)
fuel, replaces the discretionary buffer with a fixed time buffer priced at
the trip burn rate, and recomputes trip fuel from the predicted flight time.
Trip fuel depends on total weight, which includes the loading itself, so the
loading solves a fixed point

    L = beta * (L + zfw) * (FT + b) + taxi + fixed

iterated to a 1e-6 kg residual (the closed form of this affine map is used as
a test oracle). The per-flight burn factor beta is recovered from the
planner's own quantities.

Benefits use a cost-to-carry factor: carrying one kg less over the route
saves ``ctc * dist`` kg of burn. Risk compares the counterfactual remaining
fuel at landing against the reserve requirement; recorded consumption is
corrected downward by the weight effect of the lighter loading (the raw
comparison is available behind a flag).

Conversion constants reproduce the reference accounting exactly as printed;
the density constant is exposed for callers who want a physical value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from flighttime.ingest.records import FlightRecord

#: Conversion constants (per gallon) used by the fleet accounting.
DENSITY_KG_PER_GALLON = 0.3223
CO2_KG_PER_GALLON = 9.75
PRICE_USD_PER_GALLON = 1.6


class DegenerateRecord(ValueError):
    """Record quantities make the burn factor undefined."""


class NoConvergence(RuntimeError):
    """The loading fixed point is not contractive for these inputs."""


@dataclass(frozen=True)
class FuelPolicy:
    """A buffer-time policy; minutes of trip-rate fuel added on top."""

    name: str
    buffer_minutes: float

    def __post_init__(self):
        if self.buffer_minutes <= 0:
            raise ValueError("buffer must be positive")


PRO_EFFICIENCY = FuelPolicy("pro_efficiency", 10.0)
PRO_SAFETY = FuelPolicy("pro_safety", 25.0)
POLICIES = {p.name: p for p in (PRO_EFFICIENCY, PRO_SAFETY)}


@dataclass
class FuelPlanResult:
    """Per-flight outcome of applying one policy to one prediction."""

    flight_id: str
    policy: str
    predicted_ft: float  # minutes
    beta: float  # kg per (kg * minute)
    mission_fuel: float  # kg
    proposed_loading: float  # kg
    less_carried: float  # kg (negative when the new plan loads more)
    ctc: float  # kg per (kg * meter)
    less_consumed: float  # kg
    adjusted_consumed: float  # kg
    incident: bool


def estimate_beta(record: FlightRecord) -> float:
    """Burn factor implied by the planner's own loading, weight, and time."""
    weight = record.fuel_loading_fps + record.zfw
    if weight <= 0 or record.planned_flight_time <= 0:
        raise DegenerateRecord(f"flight {record.flight_id}: zero weight or planned time")
    return record.mission_fuel_fps / (weight * record.planned_flight_time)


def mission_fuel(beta: float, loading: float, zfw: float, flight_time: float) -> float:
    """Burn model: fuel to fly `flight_time` minutes at the given weights."""
    return beta * (loading + zfw) * flight_time


def propose_loading(
    record: FlightRecord,
    predicted_ft: float,
    policy: FuelPolicy,
    beta: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> tuple[float, float]:
    """(mission fuel, proposed loading) under the policy's time buffer.

    The buffer term converts `policy.buffer_minutes` at the trip burn rate
    (trip fuel per flight-time minute), which makes the fixed point affine
    with slope beta * (FT + b); slope >= 1 is physically absurd and raises.
    """
    if predicted_ft <= 0:
        raise ValueError("predicted flight time must be positive")
    if beta is None:
        beta = estimate_beta(record)
    slope = beta * (predicted_ft + policy.buffer_minutes)
    if slope >= 1.0:
        raise NoConvergence(
            f"flight {record.flight_id}: burn slope {slope:.3f} >= 1, no finite loading"
        )
    base = record.taxi_fuel + record.fixed_fuel
    loading = base
    for _ in range(max_iter):
        trip = mission_fuel(beta, loading, record.zfw, predicted_ft)
        buffer_fuel = policy.buffer_minutes * (trip / predicted_ft)
        new_loading = trip + base + buffer_fuel
        if abs(new_loading - loading) < tol:
            loading = new_loading
            break
        loading = new_loading
    else:
        raise NoConvergence(f"flight {record.flight_id}: no fixed point in {max_iter} iterations")
    trip = mission_fuel(beta, loading, record.zfw, predicted_ft)
    return trip + record.taxi_fuel, loading


def benefits(record: FlightRecord, proposed_loading: float) -> tuple[float, float, float]:
    """(less carried, cost-to-carry, less consumed) vs the planner's loading."""
    less_carried = record.fuel_loading_fps - proposed_loading
    ctc = record.mission_fuel_fps / (record.distance * (record.zfw + record.fuel_loading_fps))
    less_consumed = ctc * less_carried * record.distance
    return less_carried, ctc, less_consumed


def plan_flight(
    record: FlightRecord,
    predicted_ft: float,
    policy: FuelPolicy,
    use_raw_consumption: bool = False,
) -> FuelPlanResult:
    """Apply one policy to one flight and assess the depletion outcome."""
    beta = estimate_beta(record)
    mission, loading = propose_loading(record, predicted_ft, policy, beta=beta)
    less_carried, ctc, less_consumed = benefits(record, loading)
    adjusted = record.consumed_fuel - (0.0 if use_raw_consumption else less_consumed)
    incident = (loading - adjusted) < record.reserve_fuel
    return FuelPlanResult(
        flight_id=record.flight_id,
        policy=policy.name,
        predicted_ft=predicted_ft,
        beta=beta,
        mission_fuel=mission,
        proposed_loading=loading,
        less_carried=less_carried,
        ctc=ctc,
        less_consumed=less_consumed,
        adjusted_consumed=adjusted,
        incident=incident,
    )


def plan_fleet(
    records: Sequence[FlightRecord],
    predictions: Mapping[str, float],
    policy: FuelPolicy,
    use_raw_consumption: bool = False,
) -> list[FuelPlanResult]:
    """Plan every record with a prediction; order follows the records."""
    out = []
    for record in records:
        if record.flight_id not in predictions:
            continue
        out.append(
            plan_flight(
                record,
                predictions[record.flight_id],
                policy,
                use_raw_consumption=use_raw_consumption,
            )
        )
    return out


def depletion_risk(results: Sequence[FuelPlanResult]) -> float:
    """Fraction of flights whose remaining fuel at landing dips under reserve."""
    if not results:
        return 0.0
    return sum(1 for r in results if r.incident) / len(results)


def convert_savings(saved_kg: float,
                    density: float = DENSITY_KG_PER_GALLON,
                    co2_per_gallon: float = CO2_KG_PER_GALLON,
                    price_per_gallon: float = PRICE_USD_PER_GALLON) -> tuple[float, float, float]:
    """(gallons, USD saved, CO2 kg avoided) for a fuel-burn reduction in kg."""
    gallons = saved_kg / density
    return gallons, gallons * price_per_gallon, gallons * co2_per_gallon


@dataclass
class GroupBenefit:
    group: str
    policy: str
    n_flights: int
    less_carried_kg: float
    less_carried_pct: float  # vs the group's planner loading total
    less_consumed_kg: float
    less_consumed_pct: float  # vs the group's recorded consumption total
    risk_pct: float


@dataclass
class FleetSummary:
    """Per (group, policy) benefits plus fleet-level conversions per policy."""

    groups: list[GroupBenefit]
    fleet: dict[str, dict[str, float]]  # policy -> totals and conversions


def fleet_summary(
    records: Sequence[FlightRecord],
    results_by_policy: Mapping[str, Sequence[FuelPlanResult]],
    group_of: Callable[[FlightRecord], str],
) -> FleetSummary:
    by_id = {r.flight_id: r for r in records}
    rows: list[GroupBenefit] = []
    fleet: dict[str, dict[str, float]] = {}
    for policy in sorted(results_by_policy):
        results = results_by_policy[policy]
        grouped: dict[str, list[FuelPlanResult]] = {}
        for res in results:
            grouped.setdefault(group_of(by_id[res.flight_id]), []).append(res)
        for group in sorted(grouped):
            members = grouped[group]
            loading_total = sum(by_id[m.flight_id].fuel_loading_fps for m in members)
            consumed_total = sum(by_id[m.flight_id].consumed_fuel for m in members)
            carried = sum(m.less_carried for m in members)
            consumed = sum(m.less_consumed for m in members)
            rows.append(
                GroupBenefit(
                    group=group,
                    policy=policy,
                    n_flights=len(members),
                    less_carried_kg=carried,
                    less_carried_pct=100.0 * carried / loading_total if loading_total else 0.0,
                    less_consumed_kg=consumed,
                    less_consumed_pct=100.0 * consumed / consumed_total if consumed_total else 0.0,
                    risk_pct=100.0 * depletion_risk(members),
                )
            )
        saved = sum(m.less_consumed for m in results)
        consumed_total = sum(by_id[m.flight_id].consumed_fuel for m in results)
        gallons, usd, co2 = convert_savings(saved)
        fleet[policy] = {
            "n_flights": float(len(results)),
            "less_consumed_kg": saved,
            "less_consumed_pct": 100.0 * saved / consumed_total if consumed_total else 0.0,
            "gallons": gallons,
            "usd_saved": usd,
            "co2_reduced_kg": co2,
        }
    return FleetSummary(groups=rows, fleet=fleet)


def hub_direction_group(hub: str) -> Callable[[FlightRecord], str]:
    """Group 1: flights departing the hub; group 2: everything else (inbound)."""

    def group_of(record: FlightRecord) -> str:
        return "outbound" if record.origin == hub else "inbound"

    return group_of


def write_fuel_reports(out_dir, records, results_by_policy, summary: FleetSummary) -> dict[str, str]:
    """Per-flight results and the group/fleet summary as delimited text."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "fuel_flights": os.path.join(out_dir, "fuel_flights.csv"),
        "fuel_summary": os.path.join(out_dir, "fuel_summary.csv"),
    }
    with open(paths["fuel_flights"], "w", encoding="utf-8") as fh:
        fh.write(
            "flight_id,policy,predicted_ft,beta,mission_fuel,proposed_loading,"
            "less_carried,ctc,less_consumed,adjusted_consumed,incident\n"
        )
        for policy in sorted(results_by_policy):
            for m in results_by_policy[policy]:
                fh.write(
                    f"{m.flight_id},{m.policy},{m.predicted_ft!r},{m.beta!r},"
                    f"{m.mission_fuel!r},{m.proposed_loading!r},{m.less_carried!r},"
                    f"{m.ctc!r},{m.less_consumed!r},{m.adjusted_consumed!r},{int(m.incident)}\n"
                )
    with open(paths["fuel_summary"], "w", encoding="utf-8") as fh:
        fh.write(
            "scope,group,policy,n_flights,less_carried_kg,less_carried_pct,"
            "less_consumed_kg,less_consumed_pct,risk_pct,gallons,usd_saved,co2_reduced_kg\n"
        )
        for g in summary.groups:
            fh.write(
                f"group,{g.group},{g.policy},{g.n_flights},{g.less_carried_kg!r},"
                f"{g.less_carried_pct!r},{g.less_consumed_kg!r},{g.less_consumed_pct!r},"
                f"{g.risk_pct!r},,,\n"
            )
        for policy in sorted(summary.fleet):
            f = summary.fleet[policy]
            fh.write(
                f"fleet,all,{policy},{int(f['n_flights'])},,,"
                f"{f['less_consumed_kg']!r},{f['less_consumed_pct']!r},,"
                f"{f['gallons']!r},{f['usd_saved']!r},{f['co2_reduced_kg']!r}\n"
            )
    return paths
