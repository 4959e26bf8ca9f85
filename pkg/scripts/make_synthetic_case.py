"""Regenerate src/osnr/fixtures/case30_synth.m, the mid-size scaling fixture.

The network is synthetic (a ring plus random chords), not an IEEE test case.
"""
from pathlib import Path

import numpy as np

from osnr.matpower import Branch, Bus, Gen, GenCost, PowerCase, validate_case, write_case

N_BUS, N_CHORDS, N_GEN, SEED = 30, 12, 6, 7


def build():
    rng = np.random.default_rng(SEED)
    gen_buses = [1] + sorted(rng.choice(np.arange(2, N_BUS + 1), N_GEN - 1, replace=False).tolist())
    buses = []
    for i in range(1, N_BUS + 1):
        kind = "ref" if i == 1 else ("pv" if i in gen_buses else "pq")
        pd = 0.0 if i in gen_buses or rng.random() < 0.3 else round(float(rng.uniform(10, 60)), 1)
        buses.append(Bus(i, kind, pd))
    pairs = [(i, i % N_BUS + 1) for i in range(1, N_BUS + 1)]
    while len(pairs) < N_BUS + N_CHORDS:
        a, b = sorted(rng.choice(np.arange(1, N_BUS + 1), 2, replace=False).tolist())
        if (a, b) not in pairs and (b, a) not in pairs:
            pairs.append((a, b))
    branches = [Branch(a, b, round(float(rng.uniform(0.05, 0.25)), 4),
                       float(rng.choice([100, 150, 200, 300]))) for a, b in pairs]
    gens = [Gen(b, 0.0, 300.0) for b in gen_buses]
    costs = [GenCost(round(float(rng.uniform(0.01, 0.1)), 4), round(float(rng.uniform(5, 40)), 2))
             for _ in gen_buses]
    case = PowerCase(100.0, tuple(buses), tuple(branches), tuple(gens), tuple(costs))
    validate_case(case)
    return case


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "osnr" / "fixtures" / "case30_synth.m"
    out.write_text(write_case(build(), name="case30_synth"), encoding="utf-8")
    print(f"wrote {out}")
