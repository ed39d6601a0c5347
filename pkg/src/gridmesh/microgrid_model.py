"""Build MILP models from scenarios.

Three model families share one set of block builders:

* standalone dispatch of a single grid-connected microgrid,
* the centralized network model (all microgrids plus the bilateral
  consistency constraint ``import[m, n, t] == export[n, m, t]``),
* the per-microgrid ADMM subproblem, which contains only the owner's
  variables and prices the consistency gap with multipliers and a
  tangent-cut quadratic penalty.

Microgrid ids are dense ``1..M``; arrays are indexed by position ``id - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .lp_core import CENTERED, EQ, GE, LE, ModelIR, SolveResult, add_pwl_quadratic
from .lp_core.qp import solve_diag_qp
from .scenario import MicrogridSpec, NetworkScenario

# variable kinds
P_G, U_G, V_G = "P_G", "u_G", "v_G"
P_CH, P_DIS, E_CH, E_DIS, EL = "P_ESc", "P_ESd", "e_ESc", "e_ESd", "EL"
GRID_IMP, GRID_EXP, P_E = "P_grid+", "P_grid-", "P_E"
NET_IMP, NET_EXP = "P_N+", "P_N-"
IMP_ON, EXP_ON = "p_N+", "p_N-"

AGGREGATE_GATES = True
BOUND_TOL = 1e-6  # solver slack tolerated on exchanged values


class VariableIndex:
    """Deterministic map from symbolic keys to model variable ids.

    Keys are tuples ``(kind, m, ..., t)``; the microgrid id is always the
    second element, which is what the privacy audit relies on.
    """

    def __init__(self):
        self._ids: dict[tuple, int] = {}
        self._keys: list[tuple] = []
        self._by_vid: dict[int, tuple] = {}

    def add(self, model: ModelIR, key: tuple, lb: float, ub: float, integer: bool = False) -> int:
        if key in self._ids:
            raise KeyError(f"duplicate variable key {key}")
        vid = model.add_var("[" + ",".join(map(str, key)) + "]", lb, ub, integer)
        self._ids[key] = vid
        self._keys.append(key)
        self._by_vid[vid] = key
        return vid

    def register(self, key: tuple, vid: int) -> None:
        """Record a variable created outside :meth:`add` (e.g. a PWL epigraph)."""
        if key in self._ids:
            raise KeyError(f"duplicate variable key {key}")
        self._ids[key] = vid
        self._keys.append(key)
        self._by_vid[vid] = key

    def __getitem__(self, key: tuple) -> int:
        return self._ids[key]

    def __contains__(self, key: tuple) -> bool:
        return key in self._ids

    def __len__(self) -> int:
        return len(self._ids)

    def keys(self):
        return list(self._keys)

    def key_of(self, vid: int) -> tuple:
        return self._by_vid[vid]

    def owners(self) -> set[int]:
        return {k[1] for k in self._keys}


@dataclass
class BuiltModel:
    model: ModelIR
    index: VariableIndex
    scenario: NetworkScenario
    owners: tuple[int, ...]


# -- solutions ----------------------------------------------------------------

@dataclass
class DispatchSolution:
    """Optimal variable values of one microgrid over the horizon."""

    mid: int
    gen_p: np.ndarray
    gen_u: np.ndarray
    gen_v: np.ndarray
    charge: np.ndarray
    discharge: np.ndarray
    charging: np.ndarray
    discharging: np.ndarray
    level: np.ndarray
    grid_imp: np.ndarray
    grid_exp: np.ndarray
    net_imp: np.ndarray  # (M, T): row n-1 is the import from microgrid n
    net_exp: np.ndarray  # (M, T): row n-1 is the export to microgrid n

    @property
    def net_exchange(self) -> np.ndarray:
        """Net import through the tie-line per interval."""
        return self.grid_imp - self.grid_exp + self.net_imp.sum(axis=0) - self.net_exp.sum(axis=0)


@dataclass
class ExchangeLedger:
    """All network and grid exchanges, indexed by microgrid position.

    ``imp[m, n, t]`` is the power microgrid ``m+1`` imports from ``n+1``;
    ``exp[m, n, t]`` what it exports to ``n+1``.
    """

    imp: np.ndarray
    exp: np.ndarray
    grid_imp: np.ndarray
    grid_exp: np.ndarray
    imp_on: np.ndarray | None = None
    exp_on: np.ndarray | None = None

    @classmethod
    def zeros(cls, M: int, T: int) -> "ExchangeLedger":
        return cls(np.zeros((M, M, T)), np.zeros((M, M, T)), np.zeros((M, T)), np.zeros((M, T)))

    @classmethod
    def from_dispatch(cls, sols: list[DispatchSolution]) -> "ExchangeLedger":
        sols = sorted(sols, key=lambda d: d.mid)
        led = cls(np.stack([d.net_imp for d in sols]), np.stack([d.net_exp for d in sols]),
                  np.stack([d.grid_imp for d in sols]), np.stack([d.grid_exp for d in sols]))
        led.imp_on, led.exp_on = led.indicators()
        return led

    def copy(self) -> "ExchangeLedger":
        return ExchangeLedger(self.imp.copy(), self.exp.copy(), self.grid_imp.copy(),
                              self.grid_exp.copy(),
                              None if self.imp_on is None else self.imp_on.copy(),
                              None if self.exp_on is None else self.exp_on.copy())

    @property
    def net_exchange(self) -> np.ndarray:
        """``P_E[m, t]``: grid import - export + network import - export."""
        return self.grid_imp - self.grid_exp + self.imp.sum(axis=1) - self.exp.sum(axis=1)

    def consistency_gap(self) -> np.ndarray:
        """``imp[m, n, t] - exp[n, m, t]`` for every ordered pair."""
        return self.imp - self.exp.transpose(1, 0, 2)

    def indicators(self, tol: float = 1e-9):
        imp_any = (self.grid_imp > tol) | (self.imp.sum(axis=1) > tol)
        exp_any = (self.grid_exp > tol) | (self.exp.sum(axis=1) > tol)
        return imp_any.astype(int), exp_any.astype(int)

    def with_dispatch(self, sol: DispatchSolution) -> DispatchSolution:
        """Copy of ``sol`` whose exchange fields come from this ledger."""
        i = sol.mid - 1
        return DispatchSolution(sol.mid, sol.gen_p, sol.gen_u, sol.gen_v, sol.charge,
                                sol.discharge, sol.charging, sol.discharging, sol.level,
                                self.grid_imp[i].copy(), self.grid_exp[i].copy(),
                                self.imp[i].copy(), self.exp[i].copy())


def device_cost(mg: MicrogridSpec, s: NetworkScenario, sol: DispatchSolution) -> float:
    total = 0.0
    for g, gen in enumerate(mg.generators):
        total += float(np.sum(gen.startup_cost * sol.gen_v[g]
                              + s.dt * (gen.noload_cost * sol.gen_u[g] + gen.cost * sol.gen_p[g])))
    return total


def microgrid_cost(mg: MicrogridSpec, s: NetworkScenario, sol: DispatchSolution,
                   include_network_terms: bool = True) -> float:
    """Operating cost of one microgrid, including grid and (optionally) network payments."""
    p = s.prices
    total = device_cost(mg, s, sol)
    total += float(np.dot(p.grid_buy, sol.grid_imp) - np.dot(p.grid_sell, sol.grid_exp))
    if include_network_terms:
        total += float(np.dot(p.network_price, sol.net_imp.sum(axis=0) - sol.net_exp.sum(axis=0)))
    return total


# -- block builders -----------------------------------------------------------

def declare_variables(mg: MicrogridSpec, s: NetworkScenario, model: ModelIR,
                      idx: VariableIndex, neighbors=()) -> None:
    m, T, lim = mg.id, s.horizon, mg.tie_limit
    for g, gen in enumerate(mg.generators):
        for t in range(T):
            idx.add(model, (P_G, m, g, t), 0.0, gen.p_max)
            idx.add(model, (U_G, m, g, t), 0, 1, True)
            idx.add(model, (V_G, m, g, t), 0, 1, True)
    for b, st in enumerate(mg.storage):
        for t in range(T):
            idx.add(model, (P_CH, m, b, t), 0.0, st.p_lim)
            idx.add(model, (P_DIS, m, b, t), 0.0, st.p_lim)
            idx.add(model, (E_CH, m, b, t), 0, 1, True)
            idx.add(model, (E_DIS, m, b, t), 0, 1, True)
            idx.add(model, (EL, m, b, t), st.el_min, st.el_max)
    for t in range(T):
        idx.add(model, (GRID_IMP, m, t), 0.0, lim)
        idx.add(model, (GRID_EXP, m, t), 0.0, lim)
        idx.add(model, (P_E, m, t), -lim, lim)
        idx.add(model, (IMP_ON, m, t), 0, 1, True)
        idx.add(model, (EXP_ON, m, t), 0, 1, True)
    for n in neighbors:
        for t in range(T):
            idx.add(model, (NET_IMP, m, n, t), 0.0, lim)
            idx.add(model, (NET_EXP, m, n, t), 0.0, lim)


def build_device_constraints(mg: MicrogridSpec, s: NetworkScenario, model: ModelIR,
                             idx: VariableIndex) -> None:
    """Generator limits and start-up logic, storage power/energy limits."""
    m, T, dt = mg.id, s.horizon, s.dt
    for g, gen in enumerate(mg.generators):
        for t in range(T):
            p, u, v = idx[P_G, m, g, t], idx[U_G, m, g, t], idx[V_G, m, g, t]
            model.add_constraint({p: 1.0, u: -gen.p_min}, GE, 0.0)
            model.add_constraint({p: 1.0, u: -gen.p_max}, LE, 0.0)
            # units start the horizon off
            row = {v: 1.0, u: -1.0}
            if t > 0:
                row[idx[U_G, m, g, t - 1]] = 1.0
            model.add_constraint(row, GE, 0.0)
    for b, st in enumerate(mg.storage):
        for t in range(T):
            pc, pd = idx[P_CH, m, b, t], idx[P_DIS, m, b, t]
            ec, ed = idx[E_CH, m, b, t], idx[E_DIS, m, b, t]
            model.add_constraint({pc: 1.0, ec: -st.p_lim}, LE, 0.0)
            model.add_constraint({pd: 1.0, ed: -st.p_lim}, LE, 0.0)
            model.add_constraint({ec: 1.0, ed: 1.0}, LE, 1.0)
            row = {idx[EL, m, b, t]: 1.0, pc: -dt * st.eta_c, pd: dt / st.eta_d}
            if t > 0:
                row[idx[EL, m, b, t - 1]] = -1.0
                model.add_constraint(row, EQ, 0.0)
            else:
                model.add_constraint(row, EQ, st.initial_level)


def build_local_objective(mg: MicrogridSpec, s: NetworkScenario, model: ModelIR,
                          idx: VariableIndex, include_network_terms: bool, neighbors=()) -> None:
    m, dt, p = mg.id, s.dt, s.prices
    obj: dict[int, float] = {}
    for g, gen in enumerate(mg.generators):
        for t in range(s.horizon):
            obj[idx[V_G, m, g, t]] = gen.startup_cost
            obj[idx[U_G, m, g, t]] = dt * gen.noload_cost
            obj[idx[P_G, m, g, t]] = dt * gen.cost
    for t in range(s.horizon):
        obj[idx[GRID_IMP, m, t]] = p.grid_buy[t]
        obj[idx[GRID_EXP, m, t]] = -p.grid_sell[t]
        if include_network_terms:
            for n in neighbors:
                obj[idx[NET_IMP, m, n, t]] = p.network_price[t]
                obj[idx[NET_EXP, m, n, t]] = -p.network_price[t]
    model.add_objective(obj)


def build_balance(mg: MicrogridSpec, s: NetworkScenario, model: ModelIR, idx: VariableIndex,
                  networked: bool, neighbors=()) -> None:
    """Supply meets net load each interval."""
    m = mg.id
    for t in range(s.horizon):
        row = {idx[P_G, m, g, t]: 1.0 for g in range(len(mg.generators))}
        for b in range(len(mg.storage)):
            row[idx[P_DIS, m, b, t]] = 1.0
            row[idx[P_CH, m, b, t]] = -1.0
        row[idx[GRID_IMP, m, t]] = 1.0
        row[idx[GRID_EXP, m, t]] = -1.0
        if networked:
            for n in neighbors:
                row[idx[NET_IMP, m, n, t]] = 1.0
                row[idx[NET_EXP, m, n, t]] = -1.0
        model.add_constraint(row, EQ, mg.net_load[t])


def build_network_constraints(mg: MicrogridSpec, s: NetworkScenario, model: ModelIR,
                              idx: VariableIndex, neighbors=()) -> None:
    """Tie-line definition and limit, import/export gating, no simultaneous import and export."""
    m, lim = mg.id, mg.tie_limit
    for t in range(s.horizon):
        pe, gi, ge = idx[P_E, m, t], idx[GRID_IMP, m, t], idx[GRID_EXP, m, t]
        on_i, on_e = idx[IMP_ON, m, t], idx[EXP_ON, m, t]
        row = {pe: 1.0, gi: -1.0, ge: 1.0}
        for n in neighbors:
            row[idx[NET_IMP, m, n, t]] = -1.0
            row[idx[NET_EXP, m, n, t]] = 1.0
        model.add_constraint(row, EQ, 0.0)
        for n in neighbors:
            model.add_constraint({idx[NET_IMP, m, n, t]: 1.0, on_i: -lim}, LE, 0.0)
            model.add_constraint({idx[NET_EXP, m, n, t]: 1.0, on_e: -lim}, LE, 0.0)
        model.add_constraint({gi: 1.0, on_i: -lim}, LE, 0.0)
        model.add_constraint({ge: 1.0, on_e: -lim}, LE, 0.0)
        model.add_constraint({on_i: 1.0, on_e: 1.0}, LE, 1.0)
        if AGGREGATE_GATES and neighbors:
            # implied by the rows above on integer points; tightens the LP relaxation
            row_i = {gi: 1.0, on_i: -lim}
            row_e = {ge: 1.0, on_e: -lim}
            for n in neighbors:
                row_i[idx[NET_IMP, m, n, t]] = 1.0
                row_e[idx[NET_EXP, m, n, t]] = 1.0
            model.add_constraint(row_i, LE, 0.0)
            model.add_constraint(row_e, LE, 0.0)


def _build_microgrid(mg: MicrogridSpec, s: NetworkScenario, model: ModelIR, idx: VariableIndex,
                     neighbors, network_terms: bool) -> None:
    declare_variables(mg, s, model, idx, neighbors)
    build_device_constraints(mg, s, model, idx)
    build_local_objective(mg, s, model, idx, network_terms, neighbors)
    build_balance(mg, s, model, idx, bool(neighbors), neighbors)
    build_network_constraints(mg, s, model, idx, neighbors)


def build_standalone(s: NetworkScenario, mid: int) -> BuiltModel:
    """Dispatch of one grid-connected microgrid with no network partners."""
    mg = s.microgrid(mid)
    model, idx = ModelIR(f"standalone_mg{mid}"), VariableIndex()
    _build_microgrid(mg, s, model, idx, (), False)
    return BuiltModel(model, idx, s, (mid,))


def build_cem(s: NetworkScenario) -> BuiltModel:
    """Centralized model: every microgrid plus bilateral consistency."""
    model, idx = ModelIR("cem"), VariableIndex()
    ids = [mg.id for mg in s.microgrids]
    for mg in s.microgrids:
        _build_microgrid(mg, s, model, idx, [n for n in ids if n != mg.id], True)
    for m in ids:
        for n in ids:
            if n == m:
                continue
            for t in range(s.horizon):
                model.add_constraint({idx[NET_IMP, m, n, t]: 1.0, idx[NET_EXP, n, m, t]: -1.0}, EQ, 0.0)
    return BuiltModel(model, idx, s, tuple(ids))


@dataclass
class SubproblemContext:
    """Everything agent ``owner`` is told by its neighbours in one ADMM step.

    Arrays are ``(M, T)`` by neighbour position; the owner's own row is
    ignored. ``neighbor_exp[n]`` is what ``n`` last proposed to export to the
    owner, ``neighbor_imp[n]`` what it proposed to import from the owner.
    ``y_out[n]`` prices the owner's imports from ``n``, ``y_in[n]`` the
    owner's exports to ``n``.
    """

    owner: int
    neighbor_exp: np.ndarray
    neighbor_imp: np.ndarray
    y_out: np.ndarray
    y_in: np.ndarray
    rho: float
    pwl_cuts: int = 24
    pwl_spacing: str = CENTERED
    pwl_min_offset: float = 1e-3
    pwl_form: str = "segments"
    penalty_blocks: list = field(default_factory=list, repr=False)

    def validate(self, s: NetworkScenario) -> None:
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        for arr, what in ((self.neighbor_exp, "neighbor_exp"), (self.neighbor_imp, "neighbor_imp")):
            for mg in s.microgrids:
                if mg.id == self.owner:
                    continue
                row = arr[mg.id - 1]
                if np.any(row < -BOUND_TOL) or np.any(row > mg.tie_limit + BOUND_TOL):
                    raise ValueError(f"{what} for microgrid {mg.id} outside [0, tie limit]")


def build_subproblem(ctx: SubproblemContext, s: NetworkScenario) -> BuiltModel:
    """Owner's slice of the augmented Lagrangian (constant terms dropped)."""
    ctx.validate(s)
    mg = s.microgrid(ctx.owner)
    m = mg.id
    ids = [x.id for x in s.microgrids]
    neighbors = [n for n in ids if n != m]
    model, idx = ModelIR(f"sub_mg{m}"), VariableIndex()
    _build_microgrid(mg, s, model, idx, neighbors, True)
    half_rho = ctx.rho / 2.0
    ctx.penalty_blocks = []
    for n in neighbors:
        j = n - 1
        for t in range(s.horizon):
            imp, exp = idx[NET_IMP, m, n, t], idx[NET_EXP, m, n, t]
            model.add_objective({imp: ctx.y_out[j, t], exp: -ctx.y_in[j, t]})
            for vid, c in ((imp, ctx.neighbor_exp[j, t]), (exp, ctx.neighbor_imp[j, t])):
                c = min(max(float(c), 0.0), mg.tie_limit)
                z = add_pwl_quadratic(model, vid, c, half_rho, ctx.pwl_cuts,
                                      spacing=ctx.pwl_spacing, min_offset=ctx.pwl_min_offset,
                                      form=ctx.pwl_form)
                if z is not None:
                    idx.register(("pwl", m, vid), z)
                if half_rho > 0:
                    ctx.penalty_blocks.append((vid, c, z))
    return BuiltModel(model, idx, s, (m,))


def polish_subproblem(ctx: SubproblemContext, s: NetworkScenario, built: BuiltModel,
                      res: SolveResult) -> tuple[BuiltModel, SolveResult]:
    """Re-optimize the continuous part of a subproblem with the exact penalty.

    Binaries are frozen at the values of ``res`` (the PWL solve of ``built``)
    and the owner's dispatch is recomputed against ``(rho/2) * (x - c)**2``
    instead of its tangent envelope. The returned model carries no PWL
    columns; its objective is the exact augmented-Lagrangian slice, so the
    polished value never exceeds the PWL point's exact value.
    """
    base = build_subproblem(replace(ctx, rho=0.0, penalty_blocks=[]), s)
    fixed = np.zeros(base.model.n_vars)
    for key in base.index.keys():
        fixed[base.index[key]] = res.x[built.index[key]]
    quad, lin = {}, {}
    const = 0.0
    for vid, c, _ in ctx.penalty_blocks:
        vid = base.index[built.index.key_of(vid)]
        quad[vid] = ctx.rho
        lin[vid] = -ctx.rho * c
        const += 0.5 * ctx.rho * c * c
    base.model.add_objective(lin, const)
    return base, solve_diag_qp(base.model, quad, fixed)


# -- extraction ---------------------------------------------------------------

def extract_dispatch(built: BuiltModel, res: SolveResult, mid: int) -> DispatchSolution:
    s, idx, x = built.scenario, built.index, res.x
    mg = s.microgrid(mid)
    T, M = s.horizon, s.n

    def grab(kind, count):
        return np.array([[x[idx[kind, mid, i, t]] for t in range(T)] for i in range(count)]).reshape(count, T)

    G, B = len(mg.generators), len(mg.storage)
    net_imp, net_exp = np.zeros((M, T)), np.zeros((M, T))
    for n in range(1, M + 1):
        if (NET_IMP, mid, n, 0) in idx:
            net_imp[n - 1] = [x[idx[NET_IMP, mid, n, t]] for t in range(T)]
            net_exp[n - 1] = [x[idx[NET_EXP, mid, n, t]] for t in range(T)]
    return DispatchSolution(
        mid,
        grab(P_G, G), np.rint(grab(U_G, G)), np.rint(grab(V_G, G)),
        grab(P_CH, B), grab(P_DIS, B), np.rint(grab(E_CH, B)), np.rint(grab(E_DIS, B)),
        grab(EL, B),
        np.array([x[idx[GRID_IMP, mid, t]] for t in range(T)]),
        np.array([x[idx[GRID_EXP, mid, t]] for t in range(T)]),
        net_imp, net_exp,
    )


def extract_all(built: BuiltModel, res: SolveResult) -> list[DispatchSolution]:
    return [extract_dispatch(built, res, m) for m in built.owners]
