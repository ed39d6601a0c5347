"""Regenerate the bundled scenario files under src/gridmesh/cases/.

Generator and storage parameters are the published appendix values. The
hourly load / solar / wind series and the tariff are synthetic: smooth
profiles shaped like typical residential, commercial and renewable-heavy
microgrids, stored alongside the netted series for provenance.
"""

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "gridmesh" / "cases"
H = np.arange(24)


def bump(center, width, height):
    return height * np.exp(-(((H - center) / width) ** 2))


def solar(peak):
    return peak * np.clip(np.sin(np.pi * (H - 6) / 12), 0, None) * ((H > 6) & (H < 18))


def wind(mean, swing, phase=3):
    return mean + swing * np.cos(2 * np.pi * (H - phase) / 24)


def residential(base, morning, evening):
    return base + bump(8, 2.0, morning) + bump(19, 2.5, evening)


def commercial(base, day):
    return base + day / (1 + np.exp(-(H - 8) * 1.5)) / (1 + np.exp((H - 18) * 1.5))


def r1(x):
    return [round(float(v), 1) for v in x]


def gen(p_min, p_max, cost, su, nl):
    return {"p_min": p_min, "p_max": p_max, "cost": cost, "startup_cost": su, "noload_cost": nl}


def ess(p_lim, el_min, el_max, **extra):
    return {"p_lim": p_lim, "el_min": el_min, "el_max": el_max, "eta_c": 0.96, "eta_d": 0.98,
            **extra}


EMPTY = gen(0, 0, 0, 0, 0)

TARIFF = {
    # time-of-use: off-peak 0-6 and 22-23, shoulder 7-16, peak 17-21
    "grid_buy": [0.18] * 7 + [0.26] * 10 + [0.38] * 5 + [0.26] * 2,
    "grid_sell": [0.06] * 7 + [0.10] * 10 + [0.14] * 5 + [0.10] * 2,
}
TARIFF["network_price"] = [round((b + s) / 2, 4) for b, s in zip(TARIFF["grid_buy"], TARIFF["grid_sell"])]


def microgrid(mid, tie, load, sol=None, wnd=None, gens=(), storage=()):
    load = np.asarray(load)
    net = load.copy()
    doc = {"id": mid, "tie_limit": tie}
    if sol is not None:
        net = net - sol
    if wnd is not None:
        net = net - wnd
    doc["net_load"] = r1(net)
    doc["generators"] = list(gens)
    doc["storage"] = list(storage)
    doc["load"] = r1(load)
    if sol is not None:
        doc["solar"] = r1(sol)
    if wnd is not None:
        doc["wind"] = r1(wnd)
    return doc


def case(name, description, mgs):
    return {"name": name, "description": description, "horizon": 24, "dt": 1.0,
            "prices": TARIFF, "microgrids": mgs}


def case1():
    return case("case1", "four microgrids; MG4 has no generators (synthetic profiles)", [
        microgrid(1, 1000, residential(450, 200, 450), solar(500),
                  gens=[gen(100, 650, 0.33, 15.00, 11.00), gen(150, 800, 0.28, 13.00, 8.70), EMPTY],
                  storage=[ess(1000, 500, 5000), ess(500, 350, 3500)]),
        microgrid(2, 1200, commercial(1300, 700), solar(300),
                  gens=[gen(100, 650, 0.33, 15.00, 11.00), gen(150, 800, 0.28, 13.00, 8.70),
                        gen(260, 940, 0.23, 10.35, 7.40)],
                  storage=[ess(800, 420, 4200), ess(400, 240, 2400)]),
        microgrid(3, 800, residential(350, 150, 300), solar(600),
                  gens=[gen(250, 900, 0.26, 11.85, 8.45), EMPTY, EMPTY],
                  storage=[ess(1000, 500, 5000), ess(500, 350, 3500)]),
        microgrid(4, 600, residential(150, 60, 200), solar(350), wind(150, 60),
                  storage=[ess(1000, 500, 5000), ess(500, 350, 3500)]),
    ])


def case2():
    return case("case2", "three microgrids (synthetic profiles)", [
        microgrid(1, 1000, residential(700, 250, 500), solar(450),
                  gens=[gen(100, 650, 0.33, 15.00, 11.00), gen(150, 800, 0.28, 13.00, 8.70)],
                  storage=[ess(500, 350, 3500,
                               note="raw levels 3500/350000 read as a units slip; "
                                    "shipped as 350/3500 like every peer unit"),
                           ess(500, 350, 3500)]),
        microgrid(2, 1200, commercial(1400, 600), solar(350),
                  gens=[gen(250, 900, 0.26, 11.85, 8.45), gen(260, 940, 0.23, 10.35, 7.40)],
                  storage=[ess(800, 420, 4200), ess(400, 240, 2400)]),
        microgrid(3, 800, residential(300, 100, 250), solar(550), wind(120, 50),
                  gens=[gen(200, 825, 0.27, 12.00, 8.60), EMPTY],
                  storage=[ess(1000, 500, 5000), ess(400, 240, 2400)]),
    ])


def case3():
    return case("case3", "four renewable-heavy microgrids; MG4 has no generators (synthetic profiles)", [
        microgrid(1, 800, residential(400, 150, 300), solar(550),
                  gens=[gen(150, 800, 0.28, 13.00, 8.70), EMPTY],
                  storage=[ess(800, 420, 4200), ess(500, 350, 3500)]),
        microgrid(2, 900, commercial(500, 400), solar(500), wind(100, 40),
                  gens=[gen(260, 940, 0.23, 10.35, 7.40), EMPTY],
                  storage=[ess(500, 350, 3500), ess(400, 240, 2400)]),
        microgrid(3, 1000, commercial(800, 500), solar(400),
                  gens=[gen(100, 650, 0.33, 15.00, 11.85), gen(250, 900, 0.26, 11.85, 8.45)],
                  storage=[ess(800, 420, 4200), ess(400, 240, 2400)]),
        microgrid(4, 700, residential(120, 50, 180), solar(450), wind(200, 80),
                  storage=[ess(1000, 500, 5000), ess(500, 350, 3500)]),
    ])


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for doc in (case1(), case2(), case3()):
        (OUT / f"{doc['name']}.json").write_text(json.dumps(doc, indent=1) + "\n")
        print("wrote", OUT / f"{doc['name']}.json")


if __name__ == "__main__":
    main()
