from tdsstab.benchmark_systems import mixed_block_system

from tdsstab.invariant import decompose_system, find_common_invariant_subspaces

from tdsstab.quasipoly import analyze_system, combine_maps, rightmost_roots

from tdsstab.simulate import HistoryFunction, integrate

import numpy as np

"""
Stability of the coupled 5 x 5 system made of the unstable 2 x 2 block and a 3 x 3
block. The 3 x 3 block has only one unstable root between tau = pi and
tau = 3.3077, which the decomposition exposes.
"""

tau_max = 8.0

sys = mixed_block_system()

subspaces = find_common_invariant_subspaces(sys.undelayed, sys.variable_matrix())
print("common invariant subspaces of dimensions {}".format([w.k for w in subspaces]))
np.savetxt("invariant_subspace_basis.txt", subspaces[0].basis)

decomposition = decompose_system(sys)

maps = []
for i, sub in enumerate(decomposition.subsystems):
    _, crossings, smap = analyze_system(sub, tau_max)
    maps.append(smap)
    print(
        "block {}: crossings at omega = {}, NU at tau = 0: {}".format(
            i, ["{:.4f}".format(p.omega) for p in crossings], smap.nu0
        )
    )
    np.savetxt("stability_map_block_{}.txt".format(i), np.array(smap.rows()), header="tau_lo tau_hi NU")

combined = combine_maps(maps)
np.savetxt("stability_map_combined.txt", np.array(combined.rows()), header="tau_lo tau_hi NU")
print("fewest unstable roots: {} for tau in {}".format(*combined.minimum_intervals()))

# roots of the 3 x 3 block inside the window
roots = rightmost_roots(decomposition.subsystems[1], 3.2)
np.savetxt("roots_block_1_tau_3.2.txt", np.column_stack([roots.real, roots.imag]))

# response of the 2 x 2 block to a constant initial function
trajectory = integrate(decomposition.subsystems[0], HistoryFunction.constant(np.ones(2)), t_end=20.0, tau=3.2)
trajectory.to_csv("response_block_0.csv")
