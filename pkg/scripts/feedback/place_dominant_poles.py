from tdsstab.benchmark_systems import slow_plant

from tdsstab.feedback import closed_loop_system, place_pole_pair

from tdsstab.quasipoly import rightmost_roots

from tdsstab.simulate import HistoryFunction, integrate, integrate_closed_loop, settling_time

import numpy as np

"""
Speeds up the slowly decaying oscillator block with internal delay h = 3.2 by placing
the pole pair -0.3254 +- 0.3254j with delayed feedback at tau = 0.1 and compares the
open- and closed-loop responses to a constant initial function.
"""

tau = 0.1
pole = -0.3254 + 0.3254j

plant = slow_plant()
K = place_pole_pair(plant, tau, pole)
print("K = {}".format(K))

roots = rightmost_roots(closed_loop_system(plant, K), tau, n_roots=10)
np.savetxt("closed_loop_roots.txt", np.column_stack([roots.real, roots.imag]))

history = HistoryFunction.constant(np.ones(2))

open_loop = integrate(plant.to_system(), history, t_end=100.0)
open_loop.to_csv("open_loop.csv")

closed_loop = integrate_closed_loop(plant, K, tau, history, t_end=100.0)
closed_loop.to_csv("closed_loop.csv")

print("settling time open loop: {}".format(settling_time(open_loop)))
print("settling time closed loop: {}".format(settling_time(closed_loop)))
