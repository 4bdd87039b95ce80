"""Upper estimate for rho^(1/2) in the free phase as the line length T grows."""
from z2higgs import free
from z2higgs.lattice import LatticeGeometry
from z2higgs.model import ModelParams

p = ModelParams(3.0, 0.0005)
print("KP case sums:", free.kp_cases(0.5, p.beta, p.kappa))
geom = LatticeGeometry.box(3, 5)
for T in (1, 2, 4, 8):
    rep = free.mf_ratio_free_report(p, 1, T, geom, L_max=T)
    print(f"T={T}:  admissible={rep.admissible}  per-length {rep.per_length:.3e}  "
          f"rho^(1/2) <= {rep.sqrt_rho_bound:.3e}")
