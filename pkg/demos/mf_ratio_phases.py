"""Monte Carlo Marcu-Fredenhagen ratios at one Higgs point and one free point.

Small lattice and short chains so it finishes in about a minute; the
acceptance suite runs the same comparison at production settings.
"""
import sys

from z2higgs.lattice import LatticeGeometry, build_line_pair
from z2higgs.model import ModelParams
from z2higgs.montecarlo import RunConfig, estimate_mf_ratios

N = int(sys.argv[1]) if len(sys.argv) > 1 else 5
sizes = [(1, 1), (2, 2), (3, 3)]
geom = LatticeGeometry.box(3, N)
cfg = RunConfig(sweeps=6000, burn_in=1000, bins=40, chains=2, seed=1)

for label, (beta, kappa) in [("higgs", (0.5, 1.5)), ("free", (1.2, 0.1))]:
    pairs = [build_line_pair(R, T, geom) for R, T in sizes]
    res, _ = estimate_mf_ratios(geom, ModelParams(beta, kappa), pairs, cfg)
    print(f"{label}: beta={beta} kappa={kappa}")
    for (R, T), r in zip(sizes, res):
        print(f"  R={R} T={T}  rho = {r.rho.mean:.5f} +- {r.rho.stderr:.5f} {r.flag}")
