from tdsstab.benchmark_systems import two_block_system

from tdsstab.exceptions import DegenerateCrossing

from tdsstab.invariant import decompose_system

from tdsstab.quasipoly import analyze_system, combine_maps, rightmost_roots, root_locus

import numpy as np

"""
Stability of the coupled 4 x 4 system with a double root at s = j for tau = pi. The
direct analysis cannot decide the crossing direction there; after splitting the
system along its common invariant subspace the two 2 x 2 blocks are analyzed
separately and the unstable-root counts are added.
"""

tau_max = 8.0

sys = two_block_system()

try:
    analyze_system(sys, tau_max)
except DegenerateCrossing as err:
    print("direct analysis fails: {}".format(err))

decomposition = decompose_system(sys)
print("block dimensions {}, residual {:.2e}".format(decomposition.dims, decomposition.residual))

maps = []
for i, sub in enumerate(decomposition.subsystems):
    _, crossings, smap = analyze_system(sub, tau_max)
    maps.append(smap)
    np.savetxt(
        "crossings_block_{}.txt".format(i),
        np.array([[p.omega, p.theta, p.tau0, p.tendency] for p in crossings]).reshape(-1, 4),
        header="omega theta tau_0 tendency",
    )
    np.savetxt("stability_map_block_{}.txt".format(i), np.array(smap.rows()), header="tau_lo tau_hi NU")

combined = combine_maps(maps)
np.savetxt("stability_map_combined.txt", np.array(combined.rows()), header="tau_lo tau_hi NU")

lowest, windows = combined.minimum_intervals()
print("fewest unstable roots: {} for tau in {}".format(lowest, windows))

# characteristic roots of the first block at tau = 3.2
roots = rightmost_roots(decomposition.subsystems[0], 3.2)
np.savetxt("roots_block_0_tau_3.2.txt", np.column_stack([roots.real, roots.imag]))

# root locus of the second block near the imaginary axis
open("root_locus_block_1.txt", "w").close()
taus = np.linspace(0.05, 4.0, 80)
for tau, roots in zip(taus, root_locus(decomposition.subsystems[1], taus, n_roots=4)):
    with open("root_locus_block_1.txt", "a") as fl:
        for root in roots:
            fl.write("{}  {}  {}\n".format(tau, root.real, root.imag))
