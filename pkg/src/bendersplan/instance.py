"""Problem data model, validation, JSON I/O and a seeded synthetic generator.

An instance describes a single-region capacity-expansion problem with a set of
expansion years, generation and storage technologies, and weather scenarios
that carry hourly demand and capacity-factor series.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

GENERATION = "generation"
STORAGE = "storage"
POWER = "power"
ENERGY = "energy"


class InstanceError(ValueError):
    """Raised for malformed instance files or invalid generator arguments."""


@dataclass
class Technology:
    id: str
    kind: str
    # year -> currency/MW; for storage this is the power capacity cost
    invest_cost: dict[int, float]
    # storage only: year -> currency/MWh
    invest_cost_energy: dict[int, float] | None = None
    # generation only: (year, scenario id) -> currency/MWh
    variable_cost: dict[tuple[int, str], float] = field(default_factory=dict)
    capacity_upper_bound: float | None = None
    fixed_capacity: float | None = None
    energy_power_ratio_bounds: tuple[float, float] | None = None

    @property
    def is_storage(self) -> bool:
        return self.kind == STORAGE


@dataclass(eq=False)
class Scenario:
    id: str
    probability: float
    demand: dict[int, np.ndarray]
    # (year, generation tech id) -> series
    capacity_factor: dict[tuple[int, str], np.ndarray]

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.id == other.id
            and self.probability == other.probability
            and _series_equal(self.demand, other.demand)
            and _series_equal(self.capacity_factor, other.capacity_factor)
        )


def _series_equal(a: dict, b: dict) -> bool:
    if a.keys() != b.keys():
        return False
    return all(np.array_equal(a[k], b[k]) for k in a)


@dataclass
class ProblemInstance:
    years: list[int]
    expansion_linkage: dict[int, set[int]]
    technologies: list[Technology]
    scenarios: list[Scenario]
    time_steps: int
    loss_of_load_cost: float

    @property
    def generation(self) -> list[Technology]:
        return [t for t in self.technologies if not t.is_storage]

    @property
    def storage(self) -> list[Technology]:
        return [t for t in self.technologies if t.is_storage]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([s.probability for s in self.scenarios], dtype=float)

    def capacity_items(self) -> list[tuple[str, str]]:
        """Ordered (tech id, power|energy) pairs that carry a capacity."""
        items = []
        for tech in self.technologies:
            items.append((tech.id, POWER))
            if tech.is_storage:
                items.append((tech.id, ENERGY))
        return items

    def tech(self, tech_id: str) -> Technology:
        for t in self.technologies:
            if t.id == tech_id:
                return t
        raise KeyError(tech_id)

    def subset(self, scenario_ids) -> "ProblemInstance":
        """Copy restricted to `scenario_ids` with renormalised probabilities."""
        keep = [s for s in self.scenarios if s.id in set(scenario_ids)]
        if not keep:
            raise InstanceError("scenario subset is empty")
        total = sum(s.probability for s in keep)
        if total <= 0:
            scen = [Scenario(s.id, 1.0 / len(keep), s.demand, s.capacity_factor) for s in keep]
        else:
            scen = [Scenario(s.id, s.probability / total, s.demand, s.capacity_factor) for s in keep]
        return ProblemInstance(
            years=list(self.years),
            expansion_linkage={y: set(v) for y, v in self.expansion_linkage.items()},
            technologies=self.technologies,
            scenarios=scen,
            time_steps=self.time_steps,
            loss_of_load_cost=self.loss_of_load_cost,
        )


def validate(instance: ProblemInstance) -> list[str]:
    """Return every broken invariant as a message naming field and rule."""
    out = []
    years = list(instance.years)
    T = instance.time_steps
    if T < 1:
        out.append("time_steps: must be at least 1")

    for y in years:
        link = instance.expansion_linkage.get(y)
        if link is None:
            out.append(f"expansion_linkage[{y}]: missing")
            continue
        if y not in link:
            out.append(f"expansion_linkage[{y}]: must contain the year itself")
        if any(yy > y or yy not in years for yy in link):
            out.append(f"expansion_linkage[{y}]: may only contain modelled years <= {y}")

    if not instance.generation:
        out.append("technologies: at least one generation technology required")
    ids = [t.id for t in instance.technologies]
    if len(set(ids)) != len(ids):
        out.append("technologies: duplicate ids")

    scen_ids = [s.id for s in instance.scenarios]
    max_var = 0.0
    for tech in instance.technologies:
        for y in years:
            c = tech.invest_cost.get(y)
            if c is None:
                out.append(f"technologies[{tech.id}].invest_cost[{y}]: missing")
            elif c < 0:
                out.append(f"technologies[{tech.id}].invest_cost[{y}]: must be >= 0")
        if tech.is_storage:
            if tech.invest_cost_energy is None:
                out.append(f"technologies[{tech.id}].invest_cost_energy: required for storage")
            else:
                for y in years:
                    c = tech.invest_cost_energy.get(y)
                    if c is None or c < 0:
                        out.append(f"technologies[{tech.id}].invest_cost_energy[{y}]: missing or negative")
            if tech.variable_cost:
                out.append(f"technologies[{tech.id}].variable_cost: storage carries no variable cost")
            rb = tech.energy_power_ratio_bounds
            if rb is not None and not (0 < rb[0] <= rb[1]):
                out.append(f"technologies[{tech.id}].energy_power_ratio_bounds: need 0 < min <= max")
        else:
            if tech.invest_cost_energy is not None:
                out.append(f"technologies[{tech.id}].invest_cost_energy: generation carries one invest cost")
            if tech.energy_power_ratio_bounds is not None:
                out.append(f"technologies[{tech.id}].energy_power_ratio_bounds: storage only")
            for y in years:
                for sid in scen_ids:
                    v = tech.variable_cost.get((y, sid))
                    if v is None:
                        out.append(f"technologies[{tech.id}].variable_cost[{y},{sid}]: missing")
                    elif v < 0:
                        out.append(f"technologies[{tech.id}].variable_cost[{y},{sid}]: must be >= 0")
                    else:
                        max_var = max(max_var, v)
        for name in ("capacity_upper_bound", "fixed_capacity"):
            v = getattr(tech, name)
            if v is not None and v < 0:
                out.append(f"technologies[{tech.id}].{name}: must be >= 0")

    if not instance.loss_of_load_cost > max_var:
        out.append("loss_of_load_cost: must strictly exceed every variable_cost")

    if not instance.scenarios:
        out.append("scenarios: at least one scenario required")
    if len(set(scen_ids)) != len(scen_ids):
        out.append("scenarios: duplicate ids")
    for s in instance.scenarios:
        if not 0.0 <= s.probability <= 1.0:
            out.append(f"scenarios[{s.id}].probability: must lie in [0, 1]")
        for y in years:
            d = s.demand.get(y)
            if d is None:
                out.append(f"scenarios[{s.id}].demand[{y}]: missing")
                continue
            if len(d) != T:
                out.append(f"scenarios[{s.id}].demand[{y}]: length {len(d)} != time_steps {T}")
            if np.any(d < 0):
                out.append(f"scenarios[{s.id}].demand[{y}]: must be >= 0")
            for tech in instance.generation:
                cf = s.capacity_factor.get((y, tech.id))
                if cf is None:
                    out.append(f"scenarios[{s.id}].capacity_factor[{y},{tech.id}]: missing")
                    continue
                if len(cf) != T:
                    out.append(f"scenarios[{s.id}].capacity_factor[{y},{tech.id}]: length != time_steps")
                if np.any(cf < 0) or np.any(cf > 1):
                    out.append(f"scenarios[{s.id}].capacity_factor[{y},{tech.id}]: values must lie in [0, 1]")
    if instance.scenarios and abs(instance.probabilities.sum() - 1.0) > 1e-9:
        out.append("scenarios.probability: probabilities must sum to 1")
    return out


def default_capacity_bounds(instance: ProblemInstance) -> dict[tuple[str, str], float]:
    """Upper bound per capacity item.

    Explicit ``capacity_upper_bound`` wins; otherwise 100 x peak demand divided
    by the smallest positive capacity factor of the technology. Storage energy
    defaults to the power bound times the maximum energy/power ratio (or the
    horizon length when no ratio is given).
    """
    peak = max((float(np.max(d)) for s in instance.scenarios for d in s.demand.values()), default=0.0)
    peak = max(peak, 1.0)
    bounds = {}
    for tech in instance.technologies:
        if tech.is_storage:
            power = tech.capacity_upper_bound if tech.capacity_upper_bound is not None else 100.0 * peak
            bounds[(tech.id, POWER)] = power
            ratio = tech.energy_power_ratio_bounds[1] if tech.energy_power_ratio_bounds else instance.time_steps
            bounds[(tech.id, ENERGY)] = power * ratio
        else:
            if tech.capacity_upper_bound is not None:
                bounds[(tech.id, POWER)] = tech.capacity_upper_bound
                continue
            cfs = np.concatenate([s.capacity_factor[(y, tech.id)] for s in instance.scenarios for y in instance.years])
            pos = cfs[cfs > 0]
            min_cf = float(pos.min()) if pos.size else 1.0
            bounds[(tech.id, POWER)] = 100.0 * peak / min_cf
    return bounds


# --------------------------------------------------------------------------
# JSON I/O

def to_dict(instance: ProblemInstance) -> dict:
    techs = []
    for t in instance.technologies:
        d = {
            "id": t.id,
            "kind": t.kind,
            "invest_cost": {str(y): v for y, v in t.invest_cost.items()},
        }
        if t.invest_cost_energy is not None:
            d["invest_cost_energy"] = {str(y): v for y, v in t.invest_cost_energy.items()}
        if t.variable_cost:
            vc: dict[str, dict[str, float]] = {}
            for (y, sid), v in t.variable_cost.items():
                vc.setdefault(str(y), {})[sid] = v
            d["variable_cost"] = vc
        if t.capacity_upper_bound is not None:
            d["capacity_upper_bound"] = t.capacity_upper_bound
        if t.fixed_capacity is not None:
            d["fixed_capacity"] = t.fixed_capacity
        if t.energy_power_ratio_bounds is not None:
            d["energy_power_ratio_bounds"] = list(t.energy_power_ratio_bounds)
        techs.append(d)
    scens = []
    for s in instance.scenarios:
        cf: dict[str, dict[str, list]] = {}
        for (y, tid), series in s.capacity_factor.items():
            cf.setdefault(str(y), {})[tid] = [float(x) for x in series]
        scens.append({
            "id": s.id,
            "probability": s.probability,
            "demand": {str(y): [float(x) for x in v] for y, v in s.demand.items()},
            "capacity_factor": cf,
        })
    return {
        "version": SCHEMA_VERSION,
        "years": list(instance.years),
        "expansion_linkage": {str(y): sorted(v) for y, v in instance.expansion_linkage.items()},
        "time_steps": instance.time_steps,
        "loss_of_load_cost": instance.loss_of_load_cost,
        "technologies": techs,
        "scenarios": scens,
    }


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise InstanceError(f"{where}: missing required key '{key}'")
    return d[key]


def from_dict(doc: dict) -> ProblemInstance:
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    version = _req(doc, "version", "instance")
    if version != SCHEMA_VERSION:
        raise InstanceError(f"instance: schema version {version} not supported (expected {SCHEMA_VERSION})")
    years = [int(y) for y in _req(doc, "years", "instance")]
    linkage = {int(y): {int(v) for v in vals} for y, vals in _req(doc, "expansion_linkage", "instance").items()}
    techs = []
    for i, td in enumerate(_req(doc, "technologies", "instance")):
        where = f"technologies[{i}]"
        vc = {}
        for y, per in td.get("variable_cost", {}).items():
            for sid, v in per.items():
                vc[(int(y), sid)] = float(v)
        ice = td.get("invest_cost_energy")
        rb = td.get("energy_power_ratio_bounds")
        techs.append(Technology(
            id=_req(td, "id", where),
            kind=_req(td, "kind", where),
            invest_cost={int(y): float(v) for y, v in _req(td, "invest_cost", where).items()},
            invest_cost_energy=None if ice is None else {int(y): float(v) for y, v in ice.items()},
            variable_cost=vc,
            capacity_upper_bound=td.get("capacity_upper_bound"),
            fixed_capacity=td.get("fixed_capacity"),
            energy_power_ratio_bounds=None if rb is None else (float(rb[0]), float(rb[1])),
        ))
        if techs[-1].kind not in (GENERATION, STORAGE):
            raise InstanceError(f"{where}.kind: expected 'generation' or 'storage', got {techs[-1].kind!r}")
    scens = []
    for i, sd in enumerate(_req(doc, "scenarios", "instance")):
        where = f"scenarios[{i}]"
        cf = {}
        for y, per in _req(sd, "capacity_factor", where).items():
            for tid, series in per.items():
                cf[(int(y), tid)] = np.asarray(series, dtype=float)
        scens.append(Scenario(
            id=_req(sd, "id", where),
            probability=float(_req(sd, "probability", where)),
            demand={int(y): np.asarray(v, dtype=float) for y, v in _req(sd, "demand", where).items()},
            capacity_factor=cf,
        ))
    return ProblemInstance(
        years=years,
        expansion_linkage=linkage,
        technologies=techs,
        scenarios=scens,
        time_steps=int(_req(doc, "time_steps", "instance")),
        loss_of_load_cost=float(_req(doc, "loss_of_load_cost", "instance")),
    )


def write_instance(instance: ProblemInstance, path) -> None:
    Path(path).write_text(json.dumps(to_dict(instance), indent=1))


def read_instance(path) -> ProblemInstance:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return from_dict(doc)


# --------------------------------------------------------------------------
# generators

_GEN_PROFILES = ("thermal", "solar", "wind")


def generate_synthetic(seed: int, n_scenarios: int = 4, n_techs: int = 3, n_storage: int = 1,
                       time_steps: int = 168, n_years: int = 2) -> ProblemInstance:
    """Seeded synthetic instance with diurnal demand and weather-like capacity factors.

    The first generation technology is always dispatchable ("thermal") so that
    serving demand is cheaper than shedding it. Costs are per modelled horizon,
    scaled linearly with ``time_steps`` relative to one week.
    """
    if n_scenarios < 1 or n_years < 1 or time_steps < 1:
        raise InstanceError("n_scenarios, n_years and time_steps must be >= 1")
    if n_techs < 1 or n_storage < 0 or n_storage >= n_techs:
        raise InstanceError("need n_techs >= 1 and 0 <= n_storage < n_techs")
    rng = np.random.default_rng(seed)
    T = time_steps
    hours = np.arange(T) % 24
    days = np.arange(T) // 24
    n_days = int(days.max()) + 1
    horizon = T / 168.0
    years = [2030 + 10 * j for j in range(n_years)]
    linkage = {y: set(years[: j + 1]) for j, y in enumerate(years)}
    scen_ids = [f"s{i:02d}" for i in range(n_scenarios)]

    techs = []
    n_gen = n_techs - n_storage
    ranges = {"thermal": ((2500, 3500), (40, 60)), "solar": ((700, 1100), (0, 1)), "wind": ((1000, 1500), (0, 2))}
    for g in range(n_gen):
        profile = _GEN_PROFILES[g % 3]
        (ilo, ihi), (vlo, vhi) = ranges[profile]
        base_inv = rng.uniform(ilo, ihi) * horizon
        learn = rng.uniform(0.7, 0.9)
        base_var = rng.uniform(vlo, vhi)
        vc = {}
        for j, y in enumerate(years):
            for sid in scen_ids:
                vc[(y, sid)] = float(base_var * (1.0 + 0.1 * j) * rng.uniform(0.95, 1.05))
        techs.append(Technology(
            id=f"{profile}{g // 3 + 1}",
            kind=GENERATION,
            invest_cost={y: float(base_inv * learn ** j) for j, y in enumerate(years)},
            variable_cost=vc,
        ))
    for k in range(n_storage):
        p_inv = rng.uniform(200, 400) * horizon
        e_inv = rng.uniform(20, 60) * horizon
        learn = rng.uniform(0.6, 0.85)
        techs.append(Technology(
            id=f"storage{k + 1}",
            kind=STORAGE,
            invest_cost={y: float(p_inv * learn ** j) for j, y in enumerate(years)},
            invest_cost_energy={y: float(e_inv * learn ** j) for j, y in enumerate(years)},
            energy_power_ratio_bounds=(1.0, 1000.0),
        ))

    base = rng.uniform(8.0, 12.0)
    scens = []
    for sid in scen_ids:
        level = 1.0 + 0.05 * rng.standard_normal()
        demand = {}
        cfs = {}
        for j, y in enumerate(years):
            growth = 1.0 + 0.15 * j
            d = base * growth * level * (1.0 + 0.25 * np.sin(2 * np.pi * (hours - 9) / 24.0))
            d = d + 0.05 * base * rng.standard_normal(T)
            demand[y] = np.maximum(d, 0.0)
            for tech in techs:
                if tech.is_storage:
                    continue
                profile = tech.id.rstrip("0123456789")
                if profile == "thermal":
                    cf = 0.9 + 0.03 * rng.standard_normal(T)
                elif profile == "solar":
                    cloud = rng.uniform(0.3, 1.0, n_days)[days]
                    cf = np.maximum(np.sin(np.pi * (hours - 6) / 12.0), 0.0) * cloud
                    cf = cf + 0.02 * rng.standard_normal(T) * (cf > 0)
                else:
                    mean = rng.uniform(0.25, 0.45)
                    noise = np.empty(T)
                    x = 0.0
                    for t in range(T):
                        x = 0.9 * x + 0.15 * rng.standard_normal()
                        noise[t] = x
                    cf = mean + noise + 0.05 * np.sin(2 * np.pi * hours / 24.0)
                cf = np.clip(cf, 0.0, 1.0)
                cf[cf < 0.01] = 0.0
                cfs[(y, tech.id)] = cf
        scens.append(Scenario(sid, 1.0 / n_scenarios, demand, cfs))

    max_var = max(v for t in techs for v in t.variable_cost.values())
    return ProblemInstance(
        years=years,
        expansion_linkage=linkage,
        technologies=techs,
        scenarios=scens,
        time_steps=T,
        loss_of_load_cost=1000.0 * max_var,
    )


def flat_demand_instance(time_steps: int = 24, demand: float = 10.0, invest_cost: float = 100.0,
                         variable_cost: float = 1.0, loss_of_load_cost: float = 1000.0) -> ProblemInstance:
    """One year, one scenario, one always-available generator, constant demand.

    With the defaults the optimum builds 10 MW and costs 100*10 + 1*240 = 1240.
    """
    y = 2030
    tech = Technology(
        id="gen",
        kind=GENERATION,
        invest_cost={y: invest_cost},
        variable_cost={(y, "s0"): variable_cost},
    )
    scen = Scenario(
        "s0", 1.0,
        demand={y: np.full(time_steps, float(demand))},
        capacity_factor={(y, "gen"): np.ones(time_steps)},
    )
    return ProblemInstance([y], {y: {y}}, [tech], [scen], time_steps, loss_of_load_cost)
