"""Proportional exchange allocation (PEA).

An optimizer only fixes each microgrid's net exchange ``P_E``; who trades with
whom is left arbitrary, so one microgrid can end up capturing all the cheap
network power. PEA rewrites the counterparties per interval so that every
importer is served in proportion to its need and every exporter sells in
proportion to its surplus. Net exchanges, internal dispatch and the network
total objective are unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .microgrid_model import DispatchSolution, ExchangeLedger, microgrid_cost
from .scenario import NetworkScenario

IMPORTER, EXPORTER, NEUTRAL = "importer", "exporter", "neutral"
NEUTRAL_TOL = 1e-9
OBJECTIVE_TOL = 1e-6


class PeaError(ValueError):
    """Raised on an inconsistent ledger or a broken objective invariant."""


@dataclass(frozen=True)
class NetPosition:
    role: str
    e_plus: float
    e_minus: float


def classify(p_e: float, tol: float = NEUTRAL_TOL) -> NetPosition:
    """Role and magnitude of one microgrid's net exchange in one interval."""
    if p_e > tol:
        return NetPosition(IMPORTER, float(p_e), 0.0)
    if p_e < -tol:
        return NetPosition(EXPORTER, 0.0, float(-p_e))
    return NetPosition(NEUTRAL, 0.0, 0.0)


def _check_roles(ledger: ExchangeLedger, p_e: np.ndarray, tol: float) -> None:
    if ledger.imp_on is None or ledger.exp_on is None:
        return
    importing = p_e > tol
    exporting = p_e < -tol
    bad = (importing & (ledger.imp_on == 0)) | (exporting & (ledger.exp_on == 0))
    if np.any(bad):
        m, t = np.argwhere(bad)[0]
        raise PeaError(f"microgrid {m + 1} at t={t}: net flow {p_e[m, t]:.6g} "
                       "contradicts its import/export status")


def allocate_interval(p_e: np.ndarray, tol: float = NEUTRAL_TOL):
    """Proportional allocation for one interval.

    Parameters
    ----------
    p_e : ndarray, shape (M,)
        Net imports per microgrid.

    Returns
    -------
    imp : ndarray, shape (M, M)
        ``imp[m, n]`` power ``m`` imports from ``n``; exports are its transpose.
    grid_imp, grid_exp : ndarray, shape (M,)
        Residual exchanged with the main grid.
    """
    M = len(p_e)
    e_plus = np.where(p_e > tol, p_e, 0.0)
    e_minus = np.where(p_e < -tol, -p_e, 0.0)
    demand, supply = e_plus.sum(), e_minus.sum()
    imp = np.zeros((M, M))
    if demand > 0 and supply > 0:
        if demand >= supply:
            # every exporter's surplus split across importers by their share of demand
            imp = np.outer(e_plus / demand, e_minus)
        else:
            # every importer's need split across exporters by their share of supply
            imp = np.outer(e_plus, e_minus / supply)
    grid_imp = np.clip(e_plus - imp.sum(axis=1), 0.0, None)
    grid_exp = np.clip(e_minus - imp.sum(axis=0), 0.0, None)
    return imp, grid_imp, grid_exp


def apply_pea(ledger: ExchangeLedger, tol: float = NEUTRAL_TOL) -> ExchangeLedger:
    """Reallocate network trades proportionally; returns a new ledger.

    Raises
    ------
    PeaError
        If a microgrid's net flow contradicts its recorded import/export status.
    """
    p_e = ledger.net_exchange
    _check_roles(ledger, p_e, tol)
    M, T = p_e.shape
    out = ExchangeLedger.zeros(M, T)
    for t in range(T):
        imp, g_imp, g_exp = allocate_interval(p_e[:, t], tol)
        out.imp[:, :, t] = imp
        out.exp[:, :, t] = imp.T
        out.grid_imp[:, t] = g_imp
        out.grid_exp[:, t] = g_exp
    out.imp_on, out.exp_on = out.indicators(tol)
    return out


def apply_to_solutions(sols: list[DispatchSolution], ledger: ExchangeLedger) -> list[DispatchSolution]:
    """Dispatch solutions carrying the exchange values of ``ledger``."""
    return [ledger.with_dispatch(d) for d in sorted(sols, key=lambda d: d.mid)]


@dataclass
class PeaReport:
    before: dict[int, float]
    after: dict[int, float]
    total_before: float
    total_after: float

    @property
    def deltas(self) -> dict[int, float]:
        return {m: self.after[m] - self.before[m] for m in self.before}

    def rows(self) -> list[dict]:
        return [{"microgrid": m, "before": self.before[m], "after": self.after[m],
                 "delta": self.after[m] - self.before[m]} for m in sorted(self.before)]


def pea_objective_report(s: NetworkScenario, sols: list[DispatchSolution],
                         before: ExchangeLedger, after: ExchangeLedger,
                         strict: bool = True, tol: float = OBJECTIVE_TOL) -> PeaReport:
    """Per-microgrid costs with the exchanges of ``before`` and ``after``.

    With ``strict`` a total mismatch above ``tol`` raises :class:`PeaError`.
    Only a network-consistent ``before`` ledger is guaranteed to match.
    """
    b, a = {}, {}
    for sol in sols:
        mg = s.microgrid(sol.mid)
        b[sol.mid] = microgrid_cost(mg, s, before.with_dispatch(sol))
        a[sol.mid] = microgrid_cost(mg, s, after.with_dispatch(sol))
    rep = PeaReport(b, a, sum(b.values()), sum(a.values()))
    if strict and abs(rep.total_after - rep.total_before) > tol:
        raise PeaError(f"total objective changed by PEA: {rep.total_before:.9g} -> "
                       f"{rep.total_after:.9g}")
    return rep
