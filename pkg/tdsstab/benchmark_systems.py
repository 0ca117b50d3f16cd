"""
Worked systems used by the tests and the scripts. The coupled systems are built
exactly as A_i = T^-1 blockdiag(...) T from transformation matrices whose entries
are rational or simple surds.
"""

import numpy as np

from scipy.linalg import block_diag, inv

from tdsstab.systems import Plant, TimeDelaySystem

PLANT_DELAY = 3.2
INPUT_COLUMN = np.array([[1.0], [0.0]])

# dx/dt = A x(t) + B x(t - tau) blocks
UNSTABLE_BLOCK = (np.array([[0.0, 1.0], [-1.0, 1.0]]), np.array([[0.0, 0.0], [0.0, 1.0]]))
OSCILLATOR_BLOCK = (np.array([[0.0, 2.0], [-1.0, 0.0]]), np.array([[0.0, 1.0], [0.0, 0.0]]))
CUBIC_BLOCK = (
    np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 1.0], [1.0, -1.0, 1.0]]),
    np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
)

SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)

TWO_BLOCK_TRAFO = np.array(
    [
        [-1.0, 11.0 / 3.0, 13.0 / 3.0, 0.0],
        [SQRT3, 8.0 / 5.0, 0.0, 5.0 / 4.0],
        [2.0 / 7.0, 0.0, 5.0 / 6.0, 8.0 / 3.0],
        [0.0, 9.0 / 4.0, 4.0 / 3.0, 2.0 / 3.0],
    ]
)

MIXED_BLOCK_TRAFO = np.array(
    [
        [1.0 / 8.0, 9.0 / 2.0, 2.0 / 3.0, 11.0 / 4.0, 0.0],
        [SQRT2, 3.0 / 4.0, 13.0 / 8.0, 0.0, SQRT2 / 2.0],
        [3.0, 6.0 / 7.0, 0.0, 31.0 / 7.0, 1.0],
        [-1.0, 0.0, 2.0, 8.0 / 3.0, -2.0],
        [0.0, SQRT3, -1.0, SQRT2, 3.0 / 7.0],
    ]
)

# Four-decimal prints of the coupled systems and of a basis of their first-block subspace
TWO_BLOCK_PRINTED = (
    np.array(
        [
            [3.2423, -1.4176, -2.7298, 4.6267],
            [-1.0366, -0.9812, -0.7598, -3.2319],
            [2.0250, 0.8723, 0.0129, 4.0908],
            [-0.9802, 1.5668, 1.2885, -1.2741],
        ]
    ),
    np.array(
        [
            [1.4104, 1.1252, -0.1052, 0.9652],
            [-0.2045, -0.5965, -0.2415, -0.2683],
            [0.4985, 0.7644, 0.1801, 0.4498],
            [-0.3069, 0.4843, 0.4550, 0.0060],
        ]
    ),
)
TWO_BLOCK_PRINTED_BASIS = np.array(
    [[0.3878, 0.8143], [-0.2562, -0.1180], [0.5371, 0.2878], [-0.2094, -0.1772]]
)

MIXED_BLOCK_PRINTED = (
    np.array(
        [
            [-14.6102, -4.9441, 11.3503, -11.5177, -11.9699],
            [-3.9437, -1.0804, 3.4948, -3.3674, -3.2193],
            [6.4695, 0.5153, -4.1521, 3.9784, 5.0394],
            [6.0633, 2.1406, -4.6372, 5.0694, 4.8474],
            [20.3590, 4.5468, -15.5102, 13.5751, 16.7733],
        ]
    ),
    np.array(
        [
            [-11.1098, -3.6577, -2.2712, -13.4823, -4.0327],
            [-3.1263, -1.0354, -0.6680, -3.7568, -1.1390],
            [4.8695, 1.7361, 1.6197, 5.1076, 1.8581],
            [4.4403, 1.4397, 0.8037, 5.5222, 1.5967],
            [16.3449, 5.4846, 3.8268, 19.2118, 6.0034],
        ]
    ),
)
MIXED_BLOCK_PRINTED_BASIS = np.array(
    [[1.2775, -1.3977], [0.6036, -0.4111], [-0.5536, 0.9967], [-0.5480, 0.4946], [-1.9230, 2.3550]]
)


def triangular_pair():
    """Pair with common invariant subspaces span{e3} and span{e1, e3}."""
    A1 = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 0.0], [0.0, 3.0, 1.0]])
    A2 = np.array([[0.0, 1.0, 0.0], [0.0, 4.0, 0.0], [2.0, 2.0, 0.0]])
    return A1, A2


def _coupled(trafo, blocks):
    Tinv = inv(trafo)
    A1 = Tinv @ block_diag(*[b[0] for b in blocks]) @ trafo
    A2 = Tinv @ block_diag(*[b[1] for b in blocks]) @ trafo
    return A1, A2


def two_block_system():
    """
    4 x 4 system with a double imaginary-axis root at s = j for tau = pi; it
    decouples into the unstable and the oscillator block.
    """
    return TimeDelaySystem.single_delay(*_coupled(TWO_BLOCK_TRAFO, [UNSTABLE_BLOCK, OSCILLATOR_BLOCK]))


def mixed_block_system():
    """5 x 5 system that decouples into the unstable block and the cubic block."""
    return TimeDelaySystem.single_delay(*_coupled(MIXED_BLOCK_TRAFO, [UNSTABLE_BLOCK, CUBIC_BLOCK]))


def block_subspace(trafo, dims, index):
    """Invariant subspace T^-1 span(e_i) of the block with the given index."""
    start = sum(dims[:index])
    return inv(trafo)[:, start : start + dims[index]]


def block_system(block):
    return TimeDelaySystem.single_delay(*block)


def unstable_plant():
    """Unstable block with fixed delay 3.2 in the coupling and input on x1."""
    return Plant(UNSTABLE_BLOCK[0], UNSTABLE_BLOCK[1], INPUT_COLUMN, PLANT_DELAY)


def slow_plant():
    """Oscillator block with fixed delay 3.2: stable but slowly decaying."""
    return Plant(OSCILLATOR_BLOCK[0], OSCILLATOR_BLOCK[1], INPUT_COLUMN, PLANT_DELAY)
