"""Iterated and reversed limits side by side for the shear with mu - gamma at half a period."""
import argparse

from sdlab.densities import builtin
from sdlab.energy import averaged_energy, localized_energy, upscaled_energy
from sdlab.kinematics import staircase_approximation, two_level_shear_1d
from sdlab.measure import make_kernel

ap = argparse.ArgumentParser()
ap.add_argument("--period", type=float, default=0.8)
ap.add_argument("--n", type=int, default=8)
ap.add_argument("--radii", type=float, nargs="+", default=[0.1, 0.01, 0.001, 0.0001])
args = ap.parse_args()

sd = two_level_shear_1d(0.3 + args.period / 2, 0.3)
psi = builtin("sin2_periodic", period=args.period)
u = staircase_approximation(sd, args.n)
print(f"localized target (n first) = {float(localized_energy(sd, psi))!r}; reversed target (r first) = 0")
print(f"r,E_alpha_r(u_{args.n}),I_alpha_r")
for r in args.radii:
    k = make_kernel(r)
    print(f"{r},{float(averaged_energy(u, psi, k))!r},{float(upscaled_energy(sd, psi, k))!r}")
