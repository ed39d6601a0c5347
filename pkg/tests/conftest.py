"""Shared fixtures: tiny hand-built scenarios and cached centralized optima."""

from __future__ import annotations

import functools

import pytest

from gridmesh.lp_core import solve
from gridmesh.microgrid_model import build_cem
from gridmesh.scenario import (GeneratorSpec, MicrogridSpec, NetworkScenario, PriceSchedule,
                               StorageSpec, bundled_case)


def tiny_two_mg(with_storage: bool = False) -> NetworkScenario:
    """Two microgrids, two intervals, one generator each."""
    st = (StorageSpec(p_lim=10.0, el_min=0.0, el_max=20.0, eta_c=0.9, eta_d=0.9, el_init=5.0),)
    mg1 = MicrogridSpec(1, 50.0, (30.0, 50.0),
                        (GeneratorSpec(10.0, 60.0, 0.05, startup_cost=2.0, noload_cost=1.0),),
                        st if with_storage else ())
    mg2 = MicrogridSpec(2, 45.0, (40.0, 20.0),
                        (GeneratorSpec(5.0, 40.0, 0.30, startup_cost=5.0, noload_cost=0.5),))
    prices = PriceSchedule((0.25, 0.35), (0.05, 0.08), (0.15, 0.20))
    return NetworkScenario((mg1, mg2), prices, horizon=2, dt=1.0, name="tiny")


def tiny_three_mg() -> NetworkScenario:
    """Three microgrids over three intervals; small enough for every backend."""
    gens = [GeneratorSpec(0.0, 40.0, 0.08, 1.0, 0.2), GeneratorSpec(5.0, 30.0, 0.22, 3.0, 0.5),
            GeneratorSpec(0.0, 25.0, 0.12, 0.0, 0.0)]
    loads = [(10.0, 35.0, 20.0), (25.0, 15.0, 30.0), (-5.0, 10.0, 12.0)]
    st = StorageSpec(8.0, 2.0, 16.0, 0.95, 0.95)
    mgs = tuple(MicrogridSpec(i + 1, 40.0, loads[i], (gens[i],), (st,) if i == 2 else ())
                for i in range(3))
    prices = PriceSchedule((0.20, 0.30, 0.25), (0.04, 0.05, 0.04), (0.12, 0.17, 0.14))
    return NetworkScenario(mgs, prices, horizon=3, dt=1.0, name="tiny3")


@functools.lru_cache(maxsize=None)
def cem_objective(case: int) -> float:
    res = solve(build_cem(bundled_case(case)).model)
    assert res.optimal
    return res.objective


@pytest.fixture
def tiny():
    return tiny_two_mg()


@pytest.fixture
def tiny3():
    return tiny_three_mg()


@pytest.fixture(scope="session")
def case1():
    return bundled_case(1)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
