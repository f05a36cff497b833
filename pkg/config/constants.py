"""
Numerical constants shared by the solvers, the dataset pipeline and the
training loop. Everything here is frozen: change a value only together with
the tests that pin it.
"""

import numpy as np

# Step-size change factors for the embedded-error controller
MAX_FACTOR = 10.0
MIN_FACTOR = 0.1

# Relative floor for the adaptive step, dt_min = DT_MIN_FRACTION * (tf - t0)
DT_MIN_FRACTION = 1e-14

# Tolerance used to decide whether a fixed-step grid ends with a partial step
GRID_ROUNDING = 1e-9


# ---------------------------------------------------------------------------
# Explicit tableaux
# ---------------------------------------------------------------------------

RK4_A = [
    [0.0, 0.0, 0.0, 0.0],
    [0.5, 0.0, 0.0, 0.0],
    [0.0, 0.5, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
]
RK4_B = [1 / 6, 1 / 3, 1 / 3, 1 / 6]
RK4_C = [0.0, 0.5, 0.5, 1.0]

DOPRI5_A = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0],
]
DOPRI5_B = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0]
DOPRI5_B_STAR = [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
DOPRI5_C = [0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0]


# ---------------------------------------------------------------------------
# Radau IIA, 3 stages, order 5
#
# Provenance: the collocation coefficients, the eigen-decomposition of A^-1
# (T, TI, MU_REAL, MU_COMPLEX), the embedded error weights E and the
# extrapolation matrix P follow the construction of Hairer & Wanner,
# "Solving Ordinary Differential Equations II", Sect. IV.8 (RADAU5).
# ---------------------------------------------------------------------------

S6 = 6 ** 0.5

RADAU_C = [(4 - S6) / 10, (4 + S6) / 10, 1.0]
RADAU_A = [
    [(88 - 7 * S6) / 360, (296 - 169 * S6) / 1800, (-2 + 3 * S6) / 225],
    [(296 + 169 * S6) / 1800, (88 + 7 * S6) / 360, (-2 - 3 * S6) / 225],
    [(16 - S6) / 36, (16 + S6) / 36, 1 / 9],
]
RADAU_B = [(16 - S6) / 36, (16 + S6) / 36, 1 / 9]

# Embedded error estimate weights applied to the stage increments Z
RADAU_E = np.array([-13 - 7 * S6, -13 + 7 * S6, -1]) / 3

# Eigenvalues of A^-1: one real and one complex-conjugate pair
RADAU_MU_REAL = 3 + 3 ** (2 / 3) - 3 ** (1 / 3)
RADAU_MU_COMPLEX = (3 + 0.5 * (3 ** (1 / 3) - 3 ** (2 / 3))
                    - 0.5j * (3 ** (5 / 6) + 3 ** (7 / 6)))

# Transformation to the stage-decoupled system, A^-1 = T diag(mu) TI
RADAU_T = np.array([
    [0.09443876248897524, -0.14125529502095421, 0.03002919410514742],
    [0.25021312296533332, 0.20412935229379994, -0.38294211275726192],
    [1.0, 1.0, 0.0],
])
RADAU_TI = np.array([
    [4.17871859155190428, 0.32768282076106237, 0.52337644549944951],
    [-4.17871859155190428, -0.32768282076106237, 0.47662355450055044],
    [0.50287263494578682, -2.57192694985560522, 0.59603920482822492],
])
RADAU_TI_REAL = RADAU_TI[0]
RADAU_TI_COMPLEX = RADAU_TI[1] + 1j * RADAU_TI[2]

# Collocation polynomial coefficients, used to predict the Newton start
RADAU_P = np.array([
    [13 / 3 + 7 * S6 / 3, -23 / 3 - 22 * S6 / 3, 10 / 3 + 5 * S6],
    [13 / 3 - 7 * S6 / 3, -23 / 3 + 22 * S6 / 3, 10 / 3 - 5 * S6],
    [1 / 3, -8 / 3, 10 / 3],
])

# Error-estimator order of the embedded Radau pair (controller q)
RADAU_ERROR_ORDER = 3

# Simplified Newton iteration. Converged when the predicted remaining
# increment norm is below NEWTON_TOL_FACTOR * rtol (floored at 10 eps / rtol).
NEWTON_MAXITER = 7
NEWTON_TOL_FACTOR = 0.03
# After a Newton failure the step is retried with a fresh Jacobian and half
# the step this many times before the solve gives up
NEWTON_RETRIES = 1

# The Jacobian is kept across steps and recomputed when the Newton
# contraction rate of an accepted step exceeds JAC_RATE, or after an
# error-test rejection while it is stale
JAC_RATE = 0.5

# Growth factors in [1, STEP_HOLD) keep dt so the LU factors stay valid
STEP_HOLD = 1.2


# ---------------------------------------------------------------------------
# Training defaults
# ---------------------------------------------------------------------------

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
WEIGHT_DECAY = 1e-2

PLATEAU_FACTOR = 0.5
PLATEAU_PATIENCE = 20

MAX_EPOCHS_SUPERVISED = 400
MAX_EPOCHS_FINETUNE = 2000
BATCH_SIZE = 32

FINETUNE_LR_RATIO = 1e-2
DEFAULT_UNROLLS = (20, 40, 80)
MAX_UNROLL_FRACTION = 0.5

# Network shapes: depth counts the linear layers
MLP_DEPTH = (3, 10)
MLP_WIDTH = (5, 100)

SEARCH_DEPTH = MLP_DEPTH
SEARCH_WIDTH = MLP_WIDTH
SEARCH_LR = (1e-4, 2e-3)
ACTIVATIONS = ("gelu", "silu", "hardswish", "leaky_relu", "relu")

# Consecutive non-finite batches tolerated before a run is aborted
MAX_BAD_BATCHES = 10

# Step budget of the adaptive neural-ODE validation solve
VALIDATION_MAX_STEPS = 20000


# ---------------------------------------------------------------------------
# Files and exit codes
# ---------------------------------------------------------------------------

CSV_FLOAT_FORMAT = "%.17g"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4
