"""Objective-based ADMM coordination of microgrid agents.

Each agent owns one microgrid and solves its own augmented-Lagrangian
subproblem. Agents run one after another in ascending id order (a
Gauss-Seidel sweep): an agent always sees the newest proposals of its
neighbours, i.e. this iteration's values for agents that already ran and
last iteration's for the rest. The only data crossing an agent boundary is an
:class:`ExchangeMessage` of ``(direction, from, to, t, value)`` tuples.

After each sweep the coordinator updates multipliers and residuals and
decides whether to stop, either on the classic ``eps <= eps_th`` threshold or
on the objective-based rule (trailing-window objective rate of change below
``beta`` *and* current ``eps`` below its trailing-window mean).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .lp_core import CENTERED, SolverError, solve
from .microgrid_model import (
    DispatchSolution,
    ExchangeLedger,
    SubproblemContext,
    build_subproblem,
    extract_dispatch,
    microgrid_cost,
    polish_subproblem,
)
from .scenario import MicrogridSpec, NetworkScenario

log = logging.getLogger(__name__)

STOP_OBJECTIVE = "objective_criteria"
STOP_EPSILON = "epsilon_threshold"
STOP_MAX_ITERS = "max_iters"
STOP_TIME_LIMIT = "time_limit"


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 0.001
    beta: float = 0.001
    k_s: int = 100
    epsilon_th: float = 0.1
    max_iters: int = 2000
    pwl_cuts: int = 24
    pwl_spacing: str = CENTERED
    pwl_min_offset: float = 1e-3
    pwl_form: str = "segments"
    polish: bool = True
    backend: str | None = None
    sub_gap: float = 1e-6
    time_limit: float | None = None  # wall-clock seconds; checked after each sweep

    def validate(self) -> None:
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.k_s < 1:
            raise ValueError("k_s must be at least 1")
        if self.max_iters < self.k_s:
            raise ValueError("max_iters must be at least k_s")
        if self.pwl_cuts < 2:
            raise ValueError("pwl_cuts must be at least 2")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError("time_limit must be positive")


# -- agent boundary -----------------------------------------------------------

IMPORT, EXPORT = "import", "export"


@dataclass(frozen=True)
class ExchangeEntry:
    direction: str  # IMPORT: sender buys from counterpart; EXPORT: sender sells to it
    sender: int
    counterpart: int
    t: int
    value: float

    def to_dict(self) -> dict:
        return {"direction": self.direction, "from": self.sender, "to": self.counterpart,
                "t": self.t, "value": self.value}


@dataclass(frozen=True)
class ExchangeMessage:
    sender: int
    iteration: int
    entries: tuple[ExchangeEntry, ...]

    def to_dict(self) -> dict:
        return {"sender": self.sender, "iteration": self.iteration,
                "entries": [e.to_dict() for e in self.entries]}


def public_view(s: NetworkScenario, owner: int) -> NetworkScenario:
    """The scenario as agent ``owner`` may see it.

    Neighbours keep only their id and tie-line rating; their devices and net
    load are blanked.
    """
    mgs = []
    for mg in s.microgrids:
        if mg.id == owner:
            mgs.append(mg)
        else:
            mgs.append(MicrogridSpec(mg.id, mg.tie_limit, (0.0,) * s.horizon))
    return replace(s, microgrids=tuple(mgs))


class MicrogridAgent:
    """Holds one microgrid's private data and answers with exchange proposals."""

    def __init__(self, s: NetworkScenario, owner: int, cfg: AdmmConfig):
        self.owner = owner
        self.view = public_view(s, owner)
        self.spec = self.view.microgrid(owner)
        self.cfg = cfg
        self.last_model = None
        self.solution: DispatchSolution | None = None

    def step(self, iteration: int, neighbor_exp: np.ndarray, neighbor_imp: np.ndarray,
             y_out: np.ndarray, y_in: np.ndarray) -> ExchangeMessage:
        cfg = self.cfg
        ctx = SubproblemContext(self.owner, neighbor_exp, neighbor_imp, y_out, y_in, cfg.rho,
                                cfg.pwl_cuts, cfg.pwl_spacing, cfg.pwl_min_offset,
                                cfg.pwl_form)
        built = build_subproblem(ctx, self.view)
        self.last_model = built
        res = solve(built.model, cfg.backend, gap=cfg.sub_gap)
        if not res.optimal:
            raise SolverError(f"agent {self.owner}: subproblem {res.status} at iteration {iteration}")
        if cfg.polish and cfg.rho > 0:
            pbuilt, pres = polish_subproblem(ctx, self.view, built, res)
            if pres.optimal:
                built, res = pbuilt, pres
            else:
                log.warning("agent %d: polish %s at iteration %d; keeping the PWL point",
                            self.owner, pres.status, iteration)
        self.solution = extract_dispatch(built, res, self.owner)
        entries = []
        for mg in self.view.microgrids:
            n = mg.id
            if n == self.owner:
                continue
            for t in range(self.view.horizon):
                entries.append(ExchangeEntry(IMPORT, self.owner, n, t,
                                             float(self.solution.net_imp[n - 1, t])))
                entries.append(ExchangeEntry(EXPORT, self.owner, n, t,
                                             float(self.solution.net_exp[n - 1, t])))
        return ExchangeMessage(self.owner, iteration, tuple(entries))

    def cost(self) -> float:
        return microgrid_cost(self.spec, self.view, self.solution)


# -- coordinator state -----------------------------------------------------------

@dataclass
class AdmmState:
    """Exchange proposals, multipliers and residuals, all ``(M, M, T)``.

    ``imp[m, n, t]`` / ``exp[m, n, t]`` hold agent ``m+1``'s latest proposals;
    ``y[m, n, t]`` prices ``imp[m, n, t] - exp[n, m, t]``.
    """

    imp: np.ndarray
    exp: np.ndarray
    y: np.ndarray
    r: np.ndarray
    s: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, M: int, T: int, imp0=None, exp0=None) -> "AdmmState":
        imp = np.zeros((M, M, T)) if imp0 is None else np.array(imp0, dtype=float)
        exp = np.zeros((M, M, T)) if exp0 is None else np.array(exp0, dtype=float)
        off = _offdiag_mask(M, T)
        # unit residuals keep eps^0 > 0 so nothing stops before the first sweep
        return cls(imp, exp, np.zeros((M, M, T)), off.astype(float), off.astype(float))

    def gap(self) -> np.ndarray:
        g = self.imp - self.exp.transpose(1, 0, 2)
        M = g.shape[0]
        g[np.arange(M), np.arange(M)] = 0.0
        return g

    def deliver(self, msg: ExchangeMessage) -> None:
        i = msg.sender - 1
        for e in msg.entries:
            target = self.imp if e.direction == IMPORT else self.exp
            target[i, e.counterpart - 1, e.t] = e.value


def _offdiag_mask(M: int, T: int) -> np.ndarray:
    mask = np.ones((M, M, T), dtype=bool)
    mask[np.arange(M), np.arange(M)] = False
    return mask


def sweep_once(state: AdmmState, agents: list[MicrogridAgent]) -> list[ExchangeMessage]:
    """One Gauss-Seidel pass over the agents in ascending id order.

    Proposals are delivered into ``state`` as soon as each agent finishes, so
    later agents read them within the same iteration. Multipliers are held at
    their iteration-start values for the whole pass.
    """
    k = state.iteration + 1
    msgs = []
    for agent in sorted(agents, key=lambda a: a.owner):
        j = agent.owner - 1
        # what each neighbour offers to sell to / buy from this agent
        neighbor_exp = state.exp[:, j, :].copy()
        neighbor_imp = state.imp[:, j, :].copy()
        y_out = state.y[j, :, :].copy()
        y_in = state.y[:, j, :].copy()
        try:
            msg = agent.step(k, neighbor_exp, neighbor_imp, y_out, y_in)
        except SolverError:
            raise
        except Exception as exc:  # noqa: BLE001 - attach agent identity
            raise SolverError(f"agent {agent.owner} failed at iteration {k}: {exc}") from exc
        state.deliver(msg)
        msgs.append(msg)
    return msgs


def update_duals(state: AdmmState, rho: float, prev_gap: np.ndarray):
    """Multiplier step and residuals after a completed sweep.

    ``r`` is the current consistency gap, ``s`` its change since the previous
    iteration, and ``y <- y + rho * r``.
    """
    r = state.gap()
    s = r - prev_gap
    state.y = state.y + rho * r
    state.r, state.s = r, s
    state.iteration += 1
    return state.y, r, s


def solution_quality(r, s) -> float:
    """``sqrt(||r||^2 + ||s||^2)``."""
    r = np.asarray(r, dtype=float).ravel()
    s = np.asarray(s, dtype=float).ravel()
    return math.sqrt(float(np.dot(r, r) + np.dot(s, s)))


def global_objective(s: NetworkScenario, solutions: list[DispatchSolution]) -> float:
    """Sum of every microgrid's cost at its own variables, network payments included."""
    return sum(microgrid_cost(s.microgrid(d.mid), s, d) for d in solutions)


# -- trace and stopping ---------------------------------------------------------

@dataclass
class TraceEntry:
    k: int
    objective: float
    epsilon: float
    max_abs_r: float
    max_abs_s: float
    obj_rate_ma: float = math.nan
    eps_ma: float = math.nan
    stopped: bool = False
    normalized_objective: float = math.nan


@dataclass
class AdmmTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    r: list[np.ndarray] = field(default_factory=list)
    s: list[np.ndarray] = field(default_factory=list)
    y: list[np.ndarray] = field(default_factory=list)
    stop_reason: str = ""
    keep_arrays: bool = True

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([e.objective for e in self.entries])

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([e.epsilon for e in self.entries])

    def record(self, entry: TraceEntry, r=None, s=None, y=None) -> None:
        self.entries.append(entry)
        if self.keep_arrays and r is not None:
            self.r.append(r.copy())
            self.s.append(s.copy())
            self.y.append(y.copy())


def objective_rate(objectives, k: int, k_s: int) -> float:
    """Mean relative absolute change of the objective over iterations ``k-k_s+1 .. k``.

    ``objectives[i]`` is the objective at iteration ``i + 1``; NaN until
    ``k_s`` differences exist.
    """
    if k < k_s + 1:
        return math.nan
    obj = np.asarray(objectives[k - k_s - 1:k], dtype=float)
    prev = obj[:-1]
    return float(np.mean(np.abs(np.diff(obj)) / np.maximum(np.abs(prev), 1e-12)))


def epsilon_mean(epsilons, k: int, k_s: int) -> float:
    if k < k_s:
        return math.nan
    return float(np.mean(np.asarray(epsilons[k - k_s:k], dtype=float)))


def stopping_decision(objectives, epsilons, k: int, beta: float, k_s: int) -> bool:
    """Objective-based stop test at iteration ``k`` (1-based).

    Never stops before ``k_s + 1`` iterations. Afterwards stops when the
    trailing objective rate is below ``beta`` and the current ``eps`` lies
    below its trailing mean (or is exactly zero: perfect consistency).
    """
    if k < k_s + 1:
        return False
    rate = objective_rate(objectives, k, k_s)
    eps_k = float(epsilons[k - 1])
    eps_ma = epsilon_mean(epsilons, k, k_s)
    return rate < beta and (eps_k < eps_ma or eps_k == 0.0)


# -- drivers --------------------------------------------------------------------

@dataclass
class AdmmResult:
    solutions: list[DispatchSolution]
    ledger: ExchangeLedger
    trace: AdmmTrace
    converged: bool
    stop_reason: str
    iterations: int
    objective: float
    epsilon: float
    config: AdmmConfig


def _run(s: NetworkScenario, cfg: AdmmConfig, mode: str, cem_objective: float | None = None,
         keep_arrays: bool = True, init=None, callback=None) -> AdmmResult:
    cfg.validate()
    M, T = s.n, s.horizon
    agents = [MicrogridAgent(s, mg.id, cfg) for mg in s.microgrids]
    state = AdmmState.initial(M, T, *(init or (None, None)))
    trace = AdmmTrace(keep_arrays=keep_arrays)
    prev_gap = state.gap()
    stop_reason = STOP_MAX_ITERS
    converged = False
    t0 = time.monotonic()
    for k in range(1, cfg.max_iters + 1):
        sweep_once(state, agents)
        _, r, sres = update_duals(state, cfg.rho, prev_gap)
        prev_gap = r
        sols = [a.solution for a in agents]
        obj = global_objective(s, sols)
        eps = solution_quality(r, sres)
        entry = TraceEntry(k, obj, eps, float(np.max(np.abs(r), initial=0.0)),
                           float(np.max(np.abs(sres), initial=0.0)))
        if cem_objective:
            entry.normalized_objective = obj / cem_objective
        trace.record(entry, r, sres, state.y)
        objs, epss = trace.objectives, trace.epsilons
        entry.obj_rate_ma = objective_rate(objs, k, cfg.k_s)
        entry.eps_ma = epsilon_mean(epss, k, cfg.k_s)
        if mode == "reference":
            stop = eps <= cfg.epsilon_th
        else:
            stop = stopping_decision(objs, epss, k, cfg.beta, cfg.k_s)
        if callback is not None:
            callback(entry)
        if stop:
            entry.stopped = True
            stop_reason = STOP_EPSILON if mode == "reference" else STOP_OBJECTIVE
            converged = True
            break
        if cfg.time_limit is not None and time.monotonic() - t0 >= cfg.time_limit:
            stop_reason = STOP_TIME_LIMIT
            break
    trace.stop_reason = stop_reason
    last = trace.entries[-1]
    sols = [a.solution for a in agents]
    log.info("ADMM %s after %d iterations: objective %.6g, eps %.6g", stop_reason, last.k,
             last.objective, last.epsilon)
    return AdmmResult(sols, ExchangeLedger.from_dispatch(sols), trace, converged, stop_reason,
                      last.k, last.objective, last.epsilon, cfg)


def run_obadmm(s: NetworkScenario, cfg: AdmmConfig | None = None, **kw) -> AdmmResult:
    """Objective-based ADMM: stop on objective flattening plus an eps valley."""
    return _run(s, cfg or AdmmConfig(), "obadmm", **kw)


def run_reference_admm(s: NetworkScenario, cfg: AdmmConfig | None = None, **kw) -> AdmmResult:
    """Classic ADMM that stops once ``eps <= cfg.epsilon_th``."""
    return _run(s, cfg or AdmmConfig(), "reference", **kw)
