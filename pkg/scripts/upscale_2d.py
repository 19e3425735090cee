"""n-sweep of the averaged energy for a 2D two-level shear against its n -> infinity limit."""
import argparse
import time

from sdlab.densities import builtin
from sdlab.energy import QuadPlan, averaged_energy, upscaled_energy
from sdlab.kinematics import staircase_approximation, two_level_shear
from sdlab.measure import make_kernel

ap = argparse.ArgumentParser()
ap.add_argument("--r", type=float, default=0.1)
ap.add_argument("--n", type=int, nargs="+", default=[4, 8, 16, 32])
ap.add_argument("--period", type=float, default=0.8)
ap.add_argument("--cells-per-radius", type=int, default=4)
args = ap.parse_args()

sd = two_level_shear([1.0, 0.0], [0.0, 1.0], 0.7, 0.3)
psi = builtin("sin2_periodic", period=args.period)
k = make_kernel(args.r, dim=2)
plan = QuadPlan(cells_per_radius=args.cells_per_radius)
target = float(upscaled_energy(sd, psi, k, plan))
print(f"I^alpha_r = {target!r}")
print("n,E_alpha_r,rel_err,seconds")
for n in args.n:
    t0 = time.perf_counter()
    E = float(averaged_energy(staircase_approximation(sd, n), psi, k, plan))
    print(f"{n},{E!r},{abs(E - target) / abs(target):.3e},{time.perf_counter() - t0:.1f}")
