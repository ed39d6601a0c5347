"""Network-of-microgrids scenario: data model, JSON I/O and validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_HORIZON = 24
DEFAULT_DT = 1.0


class ScenarioError(ValueError):
    """Malformed scenario file."""


class ScenarioValidationError(ScenarioError):
    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(report.errors))


@dataclass(frozen=True)
class GeneratorSpec:
    p_min: float
    p_max: float
    cost: float
    startup_cost: float = 0.0
    noload_cost: float = 0.0

    @property
    def is_empty(self) -> bool:
        return self.p_max == 0


@dataclass(frozen=True)
class StorageSpec:
    p_lim: float
    el_min: float
    el_max: float
    eta_c: float
    eta_d: float
    el_init: float | None = None  # None -> el_min
    note: str = ""

    @property
    def initial_level(self) -> float:
        return self.el_min if self.el_init is None else self.el_init


@dataclass(frozen=True)
class MicrogridSpec:
    id: int
    tie_limit: float
    net_load: tuple[float, ...]
    generators: tuple[GeneratorSpec, ...] = ()
    storage: tuple[StorageSpec, ...] = ()
    provenance: dict = field(default_factory=dict, compare=False, hash=False)

    def net_load_at(self, t: int) -> float:
        if not 0 <= t < len(self.net_load):
            raise IndexError(f"interval {t} outside horizon of microgrid {self.id}")
        return self.net_load[t]


@dataclass(frozen=True)
class PriceSchedule:
    grid_buy: tuple[float, ...]
    grid_sell: tuple[float, ...]
    network_price: tuple[float, ...]


@dataclass(frozen=True)
class NetworkScenario:
    microgrids: tuple[MicrogridSpec, ...]
    prices: PriceSchedule
    horizon: int = DEFAULT_HORIZON
    dt: float = DEFAULT_DT
    name: str = ""
    description: str = ""

    @property
    def n(self) -> int:
        return len(self.microgrids)

    def microgrid(self, mid: int) -> MicrogridSpec:
        for mg in self.microgrids:
            if mg.id == mid:
                return mg
        raise KeyError(f"no microgrid with id {mid}")


def net_load(mg: MicrogridSpec, t: int) -> float:
    """Stored net load (load minus solar minus wind) of ``mg`` at interval ``t``."""
    return mg.net_load_at(t)


def compose_net_load(load, solar=None, wind=None) -> list[float]:
    """Net a load series against solar and wind output, hour by hour."""
    load = np.asarray(load, dtype=float)
    out = load.copy()
    for ren in (solar, wind):
        if ren is not None:
            out = out - np.asarray(ren, dtype=float)
    return out.tolist()


# -- validation -----------------------------------------------------------

@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_scenario(s: NetworkScenario) -> ValidationReport:
    rep = ValidationReport()
    err = rep.errors.append
    T = s.horizon
    if not (isinstance(T, int) and T >= 1):
        err(f"horizon: must be a positive integer, got {T!r}")
        T = -1
    if not (_finite(s.dt) and s.dt > 0):
        err(f"dt: must be positive, got {s.dt!r}")
    if not s.microgrids:
        err("microgrids: at least one microgrid is required")

    for key in ("grid_buy", "grid_sell", "network_price"):
        series = getattr(s.prices, key)
        if T > 0 and len(series) != T:
            err(f"prices.{key}: length mismatch ({len(series)} entries, horizon {T})")
        for t, v in enumerate(series):
            if not (_finite(v) and v >= 0):
                err(f"prices.{key}[{t}]: must be a non-negative number, got {v!r}")
    if not rep.errors:
        p = s.prices
        above = [t for t in range(T) if p.network_price[t] > p.grid_buy[t]]
        below = [t for t in range(T) if p.network_price[t] < p.grid_sell[t]]
        if above:
            rep.warnings.append(f"network price above grid purchase price at t={above}")
        if below:
            rep.warnings.append(f"network price below grid selling price at t={below}")

    ids = [mg.id for mg in s.microgrids]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        err(f"microgrids: ids must be unique and dense 1..{len(ids)}, got {ids}")
    for i, mg in enumerate(s.microgrids):
        path = f"microgrids[{i}] (id {mg.id})"
        if not (_finite(mg.tie_limit) and mg.tie_limit > 0):
            err(f"{path}.tie_limit: must be positive, got {mg.tie_limit!r}")
        if T > 0 and len(mg.net_load) != T:
            err(f"{path}.net_load: length mismatch ({len(mg.net_load)} entries, horizon {T})")
        if any(not _finite(v) for v in mg.net_load):
            err(f"{path}.net_load: non-finite entry")
        for g, gen in enumerate(mg.generators):
            gp = f"{path}.generators[{g}]"
            vals = (gen.p_min, gen.p_max, gen.cost, gen.startup_cost, gen.noload_cost)
            if not all(_finite(v) for v in vals):
                err(f"{gp}: non-finite parameter")
                continue
            if gen.p_min < 0:
                err(f"{gp}: p_min {gen.p_min} is negative")
            if gen.p_min > gen.p_max:
                err(f"{gp}: p_min {gen.p_min} exceeds p_max {gen.p_max}")
            if min(gen.cost, gen.startup_cost, gen.noload_cost) < 0:
                err(f"{gp}: costs must be non-negative")
        for b, st in enumerate(mg.storage):
            sp = f"{path}.storage[{b}]"
            vals = (st.p_lim, st.el_min, st.el_max, st.eta_c, st.eta_d, st.initial_level)
            if not all(_finite(v) for v in vals):
                err(f"{sp}: non-finite parameter")
                continue
            if not 0 < st.eta_c <= 1:
                err(f"{sp}: eta_c {st.eta_c} outside (0, 1]")
            if not 0 < st.eta_d <= 1:
                err(f"{sp}: eta_d {st.eta_d} outside (0, 1]")
            if st.p_lim < 0:
                err(f"{sp}: p_lim {st.p_lim} is negative")
            if not 0 <= st.el_min <= st.initial_level <= st.el_max:
                err(f"{sp}: need 0 <= el_min <= el_init <= el_max, got "
                    f"{st.el_min}, {st.initial_level}, {st.el_max}")
    return rep


# -- JSON I/O -------------------------------------------------------------

def _req(d: dict, key: str, path: str):
    if not isinstance(d, dict) or key not in d:
        raise ScenarioError(f"{path}: missing key {key!r}")
    return d[key]


def _series(v, path: str) -> tuple[float, ...]:
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                          for x in v):
        raise ScenarioError(f"{path}: expected a list of numbers")
    return tuple(float(x) for x in v)


def _num(d: dict, key: str, path: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ScenarioError(f"{path}: missing key {key!r}")
        return default
    v = d[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ScenarioError(f"{path}.{key}: expected a number, got {v!r}")
    return float(v)


def scenario_from_dict(doc: dict) -> NetworkScenario:
    """Build (without validating) a scenario from its JSON document form."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    horizon = doc.get("horizon", DEFAULT_HORIZON)
    if not isinstance(horizon, int) or isinstance(horizon, bool):
        raise ScenarioError(f"horizon: expected an integer, got {horizon!r}")
    dt = _num(doc, "dt", "scenario", DEFAULT_DT)
    pr = _req(doc, "prices", "scenario")
    prices = PriceSchedule(
        grid_buy=_series(_req(pr, "grid_buy", "prices"), "prices.grid_buy"),
        grid_sell=_series(_req(pr, "grid_sell", "prices"), "prices.grid_sell"),
        network_price=_series(_req(pr, "network_price", "prices"), "prices.network_price"),
    )
    mgs = _req(doc, "microgrids", "scenario")
    if not isinstance(mgs, list):
        raise ScenarioError("microgrids: expected a list")
    out = []
    for i, raw in enumerate(mgs):
        path = f"microgrids[{i}]"
        if not isinstance(raw, dict):
            raise ScenarioError(f"{path}: expected an object")
        mid = _req(raw, "id", path)
        if not isinstance(mid, int) or isinstance(mid, bool):
            raise ScenarioError(f"{path}.id: expected an integer")
        gens = []
        for g, rg in enumerate(raw.get("generators", [])):
            gp = f"{path}.generators[{g}]"
            if not isinstance(rg, dict):
                raise ScenarioError(f"{gp}: expected an object")
            gen = GeneratorSpec(_num(rg, "p_min", gp), _num(rg, "p_max", gp), _num(rg, "cost", gp),
                                _num(rg, "startup_cost", gp, 0.0), _num(rg, "noload_cost", gp, 0.0))
            if not gen.is_empty:
                gens.append(gen)
        stor = []
        for b, rs in enumerate(raw.get("storage", [])):
            sp = f"{path}.storage[{b}]"
            if not isinstance(rs, dict):
                raise ScenarioError(f"{sp}: expected an object")
            el_init = _num(rs, "el_init", sp) if "el_init" in rs else None
            stor.append(StorageSpec(_num(rs, "p_lim", sp), _num(rs, "el_min", sp),
                                    _num(rs, "el_max", sp), _num(rs, "eta_c", sp),
                                    _num(rs, "eta_d", sp), el_init, str(rs.get("note", ""))))
        prov = {k: raw[k] for k in ("load", "solar", "wind", "note") if k in raw}
        out.append(MicrogridSpec(
            id=mid, tie_limit=_num(raw, "tie_limit", path),
            net_load=_series(_req(raw, "net_load", path), f"{path}.net_load"),
            generators=tuple(gens), storage=tuple(stor), provenance=prov))
    return NetworkScenario(tuple(out), prices, horizon, dt,
                           str(doc.get("name", "")), str(doc.get("description", "")))


def scenario_to_dict(s: NetworkScenario) -> dict:
    """Canonical JSON document form (empty generators already dropped)."""
    mgs = []
    for mg in s.microgrids:
        d = {"id": mg.id, "tie_limit": mg.tie_limit, "net_load": list(mg.net_load),
             "generators": [{"p_min": g.p_min, "p_max": g.p_max, "cost": g.cost,
                             "startup_cost": g.startup_cost, "noload_cost": g.noload_cost}
                            for g in mg.generators],
             "storage": []}
        for st in mg.storage:
            sd = {"p_lim": st.p_lim, "el_min": st.el_min, "el_max": st.el_max,
                  "eta_c": st.eta_c, "eta_d": st.eta_d}
            if st.el_init is not None:
                sd["el_init"] = st.el_init
            if st.note:
                sd["note"] = st.note
            d["storage"].append(sd)
        d.update(mg.provenance)
        mgs.append(d)
    return {"name": s.name, "description": s.description, "horizon": s.horizon, "dt": s.dt,
            "prices": {"grid_buy": list(s.prices.grid_buy),
                       "grid_sell": list(s.prices.grid_sell),
                       "network_price": list(s.prices.network_price)},
            "microgrids": mgs}


def load_scenario(path) -> NetworkScenario:
    """Read, normalize and validate a scenario JSON file.

    Raises :class:`ScenarioError` on unreadable or malformed input and
    :class:`ScenarioValidationError` when an invariant fails.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such file") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    s = scenario_from_dict(doc)
    rep = validate_scenario(s)
    if not rep.ok:
        raise ScenarioValidationError(rep)
    return s


def save_scenario(s: NetworkScenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=1) + "\n")


def bundled_case_path(n: int | str) -> Path:
    name = n if isinstance(n, str) else f"case{n}"
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files("gridmesh") / "cases" / name))


def bundled_case(n: int | str) -> NetworkScenario:
    return load_scenario(bundled_case_path(n))
