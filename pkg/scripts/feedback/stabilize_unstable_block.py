from tdsstab.benchmark_systems import unstable_plant

from tdsstab.feedback import gain_search, is_controllable, stabilizing_intervals

from tdsstab.simulate import HistoryFunction, integrate_closed_loop, settling_time

import numpy as np

"""
Delayed feedback u = K (x(t - tau) - x(t)) for the unstable 2 x 2 block with internal
delay h = 3.2. For K = [1, -5] the closed loop is stable for 0.4540 < tau < 0.9469.
A coarse gain grid is scanned as well; with mpi4py available the grid is split over
the MPI ranks.
"""

try:
    from mpi4py import MPI

    comm = MPI.COMM_WORLD
    rank = comm.Get_rank()
except ImportError:
    comm = None
    rank = 0

plant = unstable_plant()
assert is_controllable(plant.A0, plant.A1, plant.B)

design = stabilizing_intervals(plant, [1.0, -5.0], tau_max=5.0)
if rank == 0:
    print("stable delay intervals for K = [1, -5]: {}".format(design.stable_intervals))
    np.savetxt(
        "crossings_K_1_-5.txt",
        np.array([[p.omega, p.tau0, p.period, p.tendency] for p in design.crossings]),
        header="omega tau_0 period tendency",
    )

    history = HistoryFunction.constant(np.ones(2))
    trajectory = integrate_closed_loop(plant, design.K, design.tau, history, t_end=60.0)
    trajectory.to_csv("closed_loop_tau_{:.3f}.csv".format(design.tau))
    print("settling time at tau = {:.3f}: {}".format(design.tau, settling_time(trajectory)))

axis = np.linspace(-6.0, 6.0, 13)
grid = np.array([[k1, k2] for k1 in axis for k2 in axis])
designs = gain_search(plant, grid, tau_max=3.0, beta=0.5, comm=comm, progress=True)

if rank == 0:
    open("stabilizing_gains.txt", "w").close()
    for d in designs:
        with open("stabilizing_gains.txt", "a") as fl:
            for lo, hi in d.stable_intervals:
                fl.write("{}  {}  {}  {}\n".format(d.K[0], d.K[1], lo, hi))
