"""
Built-in worked examples: data for the two-block counterexample and reference values used by the
command line and the verification suites.
"""

from __future__ import annotations

# standard libraries
import math
import typing

# third party libraries
import numpy
import numpy.typing

# local libraries
# none

# Two-block counterexample: K = 1, L = 2, a = (1, 1), b = [[2, 2]], c = (2,).
# A nested pair without a common invariant state, on which the block bound is strict at alpha = 2.
# E_l basis order is |0_B 0_C>, |0_B 1_C>, |1_B 0_C>, |1_B 1_C>.
COUNTEREXAMPLE_A = (1, 1)
COUNTEREXAMPLE_B = ((2, 2),)
COUNTEREXAMPLE_C = (2,)
COUNTEREXAMPLE_ALPHA = 2.0


def counterexample_delta() -> typing.List[numpy.typing.NDArray[numpy.complex128]]:
    return [numpy.eye(2, dtype=numpy.complex128) / 2]


def counterexample_omega() -> typing.List[numpy.typing.NDArray[numpy.complex128]]:
    # neither state is a product over B and C
    omega_1 = numpy.diag([1.0, 2.0, 3.0, 2.0]).astype(numpy.complex128) / 8
    omega_2 = numpy.diag([2.0, 1.0, 2.0, 3.0]).astype(numpy.complex128) / 8
    return [omega_1, omega_2]


# Closed-form sandwiched alpha = 2 values for the instance above.
# 2^{D̃_2} of each block, attained at q = 1; the joint optimum is the p = 1/2 superposition.
COUNTEREXAMPLE_BLOCK_LINEAR = 3.0
COUNTEREXAMPLE_BOUND_BITS = math.log2(6.0)
COUNTEREXAMPLE_VALUE_LINEAR = 3.0 + 2.0 * math.sqrt(2.0)
COUNTEREXAMPLE_VALUE_BITS = math.log2(COUNTEREXAMPLE_VALUE_LINEAR)
COUNTEREXAMPLE_OPTIMAL_P = 0.5
COUNTEREXAMPLE_OPTIMAL_Q = 1.0

# Dephasing mixture used by the gns suite: Φ = s·id + (1 − s)·Δ, Ψ = Δ on a qubit.
# At s = 1/2 the 2k-th iterate has D^cb = log2(1 + 2^{-2k}).
GNS_MIXTURE_WEIGHT = 0.5
GNS_SUITE_KS = (1, 2, 3)

# Identity against qubit dephasing: D^cb = log2(d) bits, and the maximally entangled input
# gives diamond distance 1.
ID_VS_DEPHASING_DCB_BITS = 1.0
ID_VS_DEPHASING_DIAMOND = 1.0

# Verification suite sizes.
ORDERING_ALPHAS = (0.3, 0.7, 1.5, 3.0)
ORDERING_TRIALS = 200
ONE_SHOT_EPSILON = 0.1
COLLAPSE_TRIALS = 50
COLLAPSE_MAX_DIM = 6
ADDITIVITY_TRIALS = 30
ADDITIVITY_MAX_DIM = 5
INFINITE_TRIALS = 10
PINCHING_TRIALS = 20
CERTIFICATE_TRIALS = 5
SIMPLEX_TRIALS = 20
SIMPLEX_RESOLUTION = 200
SIMPLEX_TOLERANCE = 1e-3
