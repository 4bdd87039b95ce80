"""Truncated Higgs-phase cluster series against exact enumeration on the unit cube."""
import mpmath

from z2higgs import cluster as cx
from z2higgs.exact import TinyLattice, exact_expectations
from z2higgs.lattice import PathChain
from z2higgs.model import ModelParams

alpha, k0 = cx.kappa0_higgs(3)
print(f"kappa0(3) = {k0:.10f} at alpha = {alpha:.6f}")

lat = TinyLattice.cube(1)
edge = PathChain.from_vertices([(0, 0, 0), (1, 0, 0)])
for dk in (0.25, 0.5, 1.0):
    p = ModelParams(0.5, k0 + dk)
    _, vals, _ = exact_expectations(lat, p, [edge], precise=True)
    ref = -mpmath.log(vals[0])
    print(f"\nkappa = kappa0 + {dk}:  -log<W_e> exact = {mpmath.nstr(ref, 15)}")
    for n, s in [(1, 1), (2, 3), (3, 6)]:
        r = cx.truncated_series("logwilson", p, edge, n, s, lat.geom, eps=0.4)
        print(f"  n_max={n} size_max={s}  residual {float(abs(r.value - ref)):.3e}  tail bound {r.tail:.3e}")
