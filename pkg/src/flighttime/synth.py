"""Synthetic desk-scale worlds with planted, recoverable structure.

The generative process is documented so tests can assert recovery:

* Per-airport weather severity s_a(t): clipped AR(1) on [0, 1].
* Per-airport congestion c_a(t): AR(1) with unit stationary variance.
* Per-route enroute-excess signal e_k(t): sparse vector autoregression. Each
  route k has a planted set of source routes, each with one lag (bounded by
  ``delay_memory_hours``) and a signed weight; absolute row weights sum to
  ``coupling_strength`` < 1, which keeps the process sup-norm stable.
* A flight on route k departing at slot time tau gets
  departure delay   = dep_delay_scale * c_origin(hour(tau)) + noise,
  enroute excess    = group offset + e_k(hour of scheduled arrival)
                      + weather_effect_min * s_destination(that hour) + noise,
  and its actual times are the scheduled times shifted by those amounts
  (rounded to whole seconds).
* Fuel quantities are drawn per flight and made internally consistent with
  the burn model: loading solves the planner fixed point in closed form, the
  recorded mission fuel is exactly the burn model applied to that loading,
  and consumed fuel applies the same burn rate to the realized flight time.

Every stochastic draw flows from named substreams of the scenario seed, so
generation is a pure function of the spec. Metadata records the planted
structure, realized latent moments, and exact per-group delay statistics so
downstream oracles have a known answer.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from flighttime.features.network import NetworkIndex
from flighttime.ingest.records import FlightRecord, format_utc, write_flight_records

METADATA_VERSION = 1


class InvalidSpec(ValueError):
    """Scenario parameters are inconsistent."""


@dataclass
class ScenarioSpec:
    """Parameters of one synthetic world."""

    n_airports: int = 10
    n_od: int = 20
    days: int = 60
    flights_per_od_per_day: int = 6
    delay_memory_hours: int = 12
    n_relevant_columns: int = 3
    coupling_strength: float = 0.85
    innovation_minutes: float = 3.0
    dep_delay_scale: float = 6.0
    dep_noise_minutes: float = 1.5
    noise_minutes: float = 2.5
    weather_effect_min: float = 8.0
    aircraft_types: tuple[str, ...] = ("A320", "A333")
    intl_flights_per_airport_per_day: int = 2
    beta_low: float = 7.0e-4
    beta_high: float = 9.5e-4
    seed: int = 0
    start: str = "2017-01-01T00:00:00Z"

    def validate(self) -> None:
        if self.n_airports < 2 or self.n_od < 1:
            raise InvalidSpec("need at least two airports and one OD pair")
        if self.n_od > self.n_airports * (self.n_airports - 1):
            raise InvalidSpec("more OD pairs than ordered airport pairs")
        if self.days < 1 or self.flights_per_od_per_day < 1:
            raise InvalidSpec("days and flights per OD per day must be positive")
        if not 0.0 <= self.coupling_strength < 1.0:
            raise InvalidSpec("coupling_strength must be in [0, 1)")
        if self.delay_memory_hours < 1:
            raise InvalidSpec("delay_memory_hours must be positive")
        if not 0.0 < self.beta_low <= self.beta_high:
            raise InvalidSpec("bad burn-factor range")
        for v in (self.innovation_minutes, self.dep_delay_scale, self.dep_noise_minutes,
                  self.noise_minutes, self.weather_effect_min):
            if v < 0:
                raise InvalidSpec("noise and effect scales must be non-negative")

    @property
    def period_start(self) -> datetime:
        from flighttime.ingest.records import parse_utc

        return parse_utc(self.start)


@dataclass
class SyntheticWorld:
    spec: ScenarioSpec
    index: NetworkIndex
    records: list[FlightRecord]
    metar_lines: list[str]
    metadata: dict

    @property
    def period_start(self) -> datetime:
        return self.spec.period_start

    @property
    def period_end(self) -> datetime:
        return self.period_start + timedelta(hours=self.metadata["latent_hours"])


def _codes(prefix: str, n: int) -> list[str]:
    out = []
    for i in range(n):
        a, rem = divmod(i, 26 * 26)
        b, c = divmod(rem, 26)
        out.append(prefix + chr(65 + a) + chr(65 + b) + chr(65 + c))
    return out


def _choose_od_pairs(rng: np.random.Generator, airports: Sequence[str], n_od: int):
    """Hub-and-spoke first (airport 0 is the hub), then random extras."""
    hub = airports[0]
    pairs = []
    for other in airports[1:]:
        pairs.append((hub, other))
        pairs.append((other, hub))
    pairs = pairs[:n_od]
    if len(pairs) < n_od:
        rest = [
            (a, b)
            for a in airports
            for b in airports
            if a != b and (a, b) not in set(pairs)
        ]
        extra = rng.permutation(len(rest))[: n_od - len(pairs)]
        pairs.extend(rest[i] for i in sorted(extra))
    return pairs


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float, x0: float = 0.0):
    x = np.zeros(n)
    prev = x0
    noise = rng.normal(0.0, sigma, size=n)
    for t in range(n):
        prev = phi * prev + noise[t]
        x[t] = prev
    return x


def _simulate_od_signals(
    rng: np.random.Generator,
    hours: int,
    planted: list[list[tuple[int, int, float]]],
    innovation: float,
    memory: int,
) -> np.ndarray:
    n_od = len(planted)
    e = np.zeros((hours + memory, n_od))
    w = rng.normal(0.0, innovation, size=(hours + memory, n_od))
    for t in range(memory, hours + memory):
        for k in range(n_od):
            total = w[t, k]
            for j, lag, weight in planted[k]:
                total += weight * e[t - lag, j]
            e[t, k] = total
    return e[memory:]


def _format_metar(station: str, when: datetime, severity: float, rng: np.random.Generator) -> str:
    speed = max(0, int(round(3 + 18 * severity + rng.normal(0, 1))))
    if speed <= 2 and rng.random() < 0.3:
        wind = f"VRB{speed:02d}KT"
    else:
        direction = int(rng.integers(0, 36)) * 10
        wind = f"{direction:03d}{speed:02d}KT"
        if severity > 0.55:
            gust = speed + 8 + int(round(6 * severity))
            wind = f"{direction:03d}{speed:02d}G{gust:02d}KT"
    if severity < 0.5:
        vis = 9999
    else:
        vis = int(max(800, 9999 - (severity - 0.5) * 14000) // 100 * 100)
    if severity < 0.30:
        clouds = "NSC"
    elif severity < 0.50:
        clouds = "SCT030"
    elif severity < 0.70:
        clouds = "BKN015"
    elif severity < 0.85:
        clouds = "BKN008"
    else:
        clouds = "OVC004"
    body = (
        f"METAR {station} {when.day:02d}{when.hour:02d}{when.minute:02d}Z "
        f"{wind} {vis:04d} {clouds} 20/14 Q1013="
    )
    return body


def generate(spec: ScenarioSpec) -> SyntheticWorld:
    """Build one world; a pure function of the spec (including its seed)."""
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    streams = {
        name: np.random.default_rng(s)
        for name, s in zip(
            ("network", "schedule", "latent", "flights", "weather", "fuel", "intl"),
            root.spawn(7),
        )
    }

    airports = _codes("S", spec.n_airports)
    od_pairs = _choose_od_pairs(streams["network"], airports, spec.n_od)
    index = NetworkIndex(airports, od_pairs)
    start = spec.period_start
    latent_hours = spec.days * 24 + 48

    # --- latent processes -------------------------------------------------
    rng_lat = streams["latent"]
    phi_wx, sigma_wx = 0.95, 0.05
    severity_base = {a: float(rng_lat.uniform(0.15, 0.45)) for a in airports}
    severity = {
        a: np.clip(severity_base[a] + _ar1(rng_lat, latent_hours, phi_wx, sigma_wx), 0.0, 1.0)
        for a in airports
    }
    phi_c = 0.7
    congestion = {
        a: _ar1(rng_lat, latent_hours, phi_c, np.sqrt(1 - phi_c**2)) for a in airports
    }

    min_lag = 5  # keeps planted lags observable inside a 24-hour window
    max_lag = max(min_lag, spec.delay_memory_hours)
    planted: list[list[tuple[int, int, float]]] = []
    for k in range(spec.n_od):
        sources = rng_lat.choice(spec.n_od, size=min(spec.n_relevant_columns, spec.n_od), replace=False)
        raw = rng_lat.uniform(0.5, 1.0, size=len(sources)) * rng_lat.choice([-1.0, 1.0], size=len(sources))
        if np.abs(raw).sum() > 0:
            raw *= spec.coupling_strength / np.abs(raw).sum()
        lags = rng_lat.integers(min_lag, max_lag + 1, size=len(sources))
        planted.append([(int(j), int(lag), float(wt)) for j, lag, wt in zip(sources, lags, raw)])
    od_signal = _simulate_od_signals(rng_lat, latent_hours, planted, spec.innovation_minutes, max_lag)

    # --- schedule ---------------------------------------------------------
    rng_sched = streams["schedule"]
    slots: list[dict] = []
    for k, (origin, dest) in enumerate(od_pairs):
        block_min = int(rng_sched.integers(70, 181))
        distance = float(block_min * 13000 + rng_sched.normal(0, 20000))
        minutes = np.sort(rng_sched.choice(np.arange(360, 1320), size=spec.flights_per_od_per_day, replace=False))
        for s, minute in enumerate(minutes):
            slots.append(
                {
                    "od": k,
                    "origin": origin,
                    "destination": dest,
                    "slot": s,
                    "dep_minute": int(minute),
                    "block_min": block_min,
                    "distance": max(150000.0, distance),
                    "aircraft": spec.aircraft_types[int(rng_sched.integers(0, len(spec.aircraft_types)))],
                }
            )

    type_base_zfw = {t: 40000.0 + 5000.0 * i for i, t in enumerate(spec.aircraft_types)}
    offsets = {
        (s["od"], s["aircraft"]): None for s in slots
    }
    for key in sorted(offsets, key=lambda x: (x[0], x[1])):
        offsets[key] = float(rng_sched.normal(4.0, 2.0))

    # --- fleet flights ----------------------------------------------------
    rng_fl = streams["flights"]
    rng_fuel = streams["fuel"]
    records: list[FlightRecord] = []
    group_samples: dict[tuple[str, str], list[float]] = {}
    seq = 0
    clip_count = 0
    for day in range(spec.days):
        for slot in slots:
            sched_dep = start + timedelta(days=day, minutes=slot["dep_minute"])
            sched_arr = sched_dep + timedelta(minutes=slot["block_min"])
            h_dep = int((sched_dep - start).total_seconds() // 3600)
            h_arr = int((sched_arr - start).total_seconds() // 3600)
            offset = offsets[(slot["od"], slot["aircraft"])]

            dep_delay = (
                spec.dep_delay_scale * congestion[slot["origin"]][h_dep]
                + rng_fl.normal(0.0, spec.dep_noise_minutes)
            )
            excess = (
                offset
                + od_signal[h_arr, slot["od"]]
                + spec.weather_effect_min * severity[slot["destination"]][h_arr]
                + rng_fl.normal(0.0, spec.noise_minutes)
            )
            dep_delay_s = int(round(dep_delay * 60))
            excess_s = int(round(excess * 60))
            actual_dep = sched_dep + timedelta(seconds=dep_delay_s)
            actual_arr = actual_dep + timedelta(seconds=slot["block_min"] * 60 + excess_s)
            if actual_arr <= actual_dep:  # extreme early noise; clamp to one minute
                actual_arr = actual_dep + timedelta(seconds=60)
                clip_count += 1

            plan_ft = float(slot["block_min"])
            beta = float(rng_fuel.uniform(spec.beta_low, spec.beta_high))
            zfw = float(type_base_zfw[slot["aircraft"]] + rng_fuel.normal(0.0, 800.0))
            taxi = float(250.0 + rng_fuel.uniform(0.0, 100.0))
            reserve = float(2200.0 + rng_fuel.uniform(0.0, 300.0))
            fixed = reserve + float(1200.0 + rng_fuel.uniform(0.0, 400.0))
            extra = float(rng_fuel.uniform(800.0, 2000.0))
            r = beta * plan_ft
            loading = (taxi + fixed + extra + r * zfw) / (1.0 - r)
            mission = beta * (loading + zfw) * plan_ft
            actual_ft = (actual_arr - actual_dep).total_seconds() / 60.0
            consumed = beta * (loading + zfw) * actual_ft + taxi
            if consumed > 0.98 * loading:
                consumed = 0.98 * loading
                clip_count += 1

            fdt = (actual_arr - sched_arr).total_seconds() / 60.0
            group_samples.setdefault((f"{slot['origin']}-{slot['destination']}", slot["aircraft"]), []).append(fdt)

            records.append(
                FlightRecord(
                    flight_id=f"F{seq:06d}",
                    origin=slot["origin"],
                    destination=slot["destination"],
                    aircraft_type=slot["aircraft"],
                    sched_dep=sched_dep,
                    sched_arr=sched_arr,
                    actual_dep=actual_dep,
                    actual_arr=actual_arr,
                    planned_flight_time=plan_ft,
                    fuel_loading_fps=loading,
                    mission_fuel_fps=mission,
                    consumed_fuel=consumed,
                    reserve_fuel=reserve,
                    taxi_fuel=taxi,
                    fixed_fuel=fixed,
                    zfw=zfw,
                    distance=slot["distance"],
                )
            )
            seq += 1
    n_fleet = seq

    # --- international traffic touching indexed airports -------------------
    rng_intl = streams["intl"]
    externals = _codes("X", max(4, spec.n_airports // 2))
    for day in range(spec.days):
        for airport in airports:
            for _ in range(spec.intl_flights_per_airport_per_day):
                inbound = bool(rng_intl.random() < 0.5)
                other = externals[int(rng_intl.integers(0, len(externals)))]
                dep_minute = int(rng_intl.integers(0, 1440))
                block = int(rng_intl.integers(120, 400))
                sched_dep = start + timedelta(days=day, minutes=dep_minute)
                sched_arr = sched_dep + timedelta(minutes=block)
                delay_dep = int(round(rng_intl.normal(0.0, 4.0) * 60))
                delay_arr = delay_dep + int(round(rng_intl.normal(0.0, 4.0) * 60))
                origin, dest = (other, airport) if inbound else (airport, other)
                beta = float(rng_intl.uniform(spec.beta_low, spec.beta_high))
                zfw = 60000.0
                taxi, reserve, fixed, extra = 300.0, 2500.0, 4000.0, 1500.0
                r = beta * block
                loading = (taxi + fixed + extra + r * zfw) / (1.0 - r) if r < 1 else 20000.0
                records.append(
                    FlightRecord(
                        flight_id=f"I{seq:06d}",
                        origin=origin,
                        destination=dest,
                        aircraft_type="B77W",
                        sched_dep=sched_dep,
                        sched_arr=sched_arr,
                        actual_dep=sched_dep + timedelta(seconds=delay_dep),
                        actual_arr=sched_arr + timedelta(seconds=max(delay_arr, delay_dep - block * 60 + 60)),
                        planned_flight_time=float(block),
                        fuel_loading_fps=loading,
                        mission_fuel_fps=beta * (loading + zfw) * block,
                        consumed_fuel=beta * (loading + zfw) * block + taxi,
                        reserve_fuel=reserve,
                        taxi_fuel=taxi,
                        fixed_fuel=fixed,
                        zfw=zfw,
                        distance=float(block * 13000),
                    )
                )
                seq += 1

    records.sort(key=lambda r: (r.sched_dep, r.flight_id))

    # --- METAR stream (hourly per indexed airport) -------------------------
    rng_wx = streams["weather"]
    metar_lines: list[str] = []
    for h in range(latent_hours):
        when = start + timedelta(hours=h)
        for airport in airports:
            metar_lines.append(_format_metar(airport, when, float(severity[airport][h]), rng_wx))

    # --- metadata -----------------------------------------------------------
    group_stats = {}
    for (od_key, actype), values in sorted(group_samples.items()):
        arr = np.array(values)
        group_stats[f"{od_key}|{actype}"] = {
            "n": int(arr.size),
            "mean": float(arr.mean()),
            "std": float(arr.std()),
        }
    process_stats = {}
    for (od_key, actype) in sorted(group_samples):
        k = index.od_pos(*od_key.split("-"))
        origin, dest = od_key.split("-")
        var = (
            spec.dep_delay_scale**2 * float(np.var(congestion[origin]))
            + spec.dep_noise_minutes**2
            + float(np.var(od_signal[:, k]))
            + spec.weather_effect_min**2 * float(np.var(severity[dest]))
            + spec.noise_minutes**2
        )
        mean = (
            offsets[(k, actype)]
            + spec.dep_delay_scale * float(np.mean(congestion[origin]))
            + float(np.mean(od_signal[:, k]))
            + spec.weather_effect_min * float(np.mean(severity[dest]))
        )
        process_stats[f"{od_key}|{actype}"] = {"mean": float(mean), "std": float(np.sqrt(var))}

    metadata = {
        "format_version": METADATA_VERSION,
        "spec": asdict(spec) | {"aircraft_types": list(spec.aircraft_types)},
        "index": index.to_json(),
        "index_hash": index.fingerprint,
        "hub": airports[0],
        "period_start": format_utc(start),
        "latent_hours": latent_hours,
        "planted": {
            f"{o}-{d}": [
                {"source_od": f"{od_pairs[j][0]}-{od_pairs[j][1]}", "source_pos": j, "lag": lag, "weight": wt}
                for j, lag, wt in planted[k]
            ]
            for k, (o, d) in enumerate(od_pairs)
        },
        "delay_memory_hours": int(max_lag),
        "group_stats": group_stats,
        "process_group_stats": process_stats,
        "counts": {
            "fleet_flights": n_fleet,
            "intl_flights": len(records) - n_fleet,
            "metar_reports": len(metar_lines),
            "clipped": clip_count,
        },
    }
    return SyntheticWorld(spec=spec, index=index, records=records,
                          metar_lines=metar_lines, metadata=metadata)


def write_world(world: SyntheticWorld, out_dir) -> dict[str, str]:
    """Write flights.csv, metar.txt, and metadata.json; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "flights": os.path.join(out_dir, "flights.csv"),
        "metar": os.path.join(out_dir, "metar.txt"),
        "metadata": os.path.join(out_dir, "metadata.json"),
    }
    write_flight_records(paths["flights"], world.records)
    with open(paths["metar"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(world.metar_lines) + "\n")
    with open(paths["metadata"], "w", encoding="utf-8") as fh:
        json.dump(world.metadata, fh, sort_keys=True, indent=1)
    return paths


def load_metadata(world_dir) -> dict:
    import os

    with open(os.path.join(world_dir, "metadata.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)
