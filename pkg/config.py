"""
Configuration settings for the QhoObserver project.

This module contains constants and configuration settings used throughout the project,
including numerical tolerances, continuation defaults, output file names and exit codes.
"""

# Output locations
OUTPUT_DIR = "runs"
SUMMARY_FILE = "summary.txt"
MANIFEST_FILE = "manifest.yaml"
MOMENTS_TABLE = "moments.csv"
BACKACTION_TABLE = "backaction.csv"
SYNTHESIS_TABLE = "synthesis.csv"
CHECKS_TABLE = "checks.csv"
CHECKS_COLUMNS = ("name", "residual", "tolerance", "status")

# CSV settings
CSV_SEPARATOR = ","
CSV_ENCODING = "utf-8"
CSV_FLOAT_FORMAT = "%.12g"
CSV_LINE_TERMINATOR = "\n"

# Linear algebra tolerances
TOL_HURWITZ = 1e-10          # margin on the spectral abscissa
TOL_SYMMETRY = 1e-12         # relative, for symmetric/antisymmetric input checks
TOL_PSD = 1e-9               # eigenvalue slack for semidefinite checks
TOL_HAMILTONIAN = 1e-12      # relative, for A Theta + Theta A^T = 0
IMAG_SPECTRUM_TOL = 1e-8     # max |Re eig| accepted as purely imaginary
FREQ_REL_TOL = 1e-8          # frequency equality, relative to max |omega|
EIGENBASIS_COND_MAX = 1e12
SINGULAR_REL_TOL = 1e-10     # min eigenvalue of an SPD block relative to its norm
DET_REL_TOL = 1e-10          # |det D12| relative to ||D12||^n

# Quadrature oracle
QUAD_CUTOFF = 1e-14
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 2000
QUAD_WINDOW_CYCLES = 4       # window length in periods of the fastest mode
QUAD_MAX_DOUBLINGS = 64

# Incommensurability search
SEARCH_SPACE_MAX = 10 ** 7

# Frequency gains
FREQ_GRID_SAMPLES = 2048
FREQ_SPAN_FACTOR = 4.0
FREQ_REFINE_PASSES = 3
FREQ_REFINE_POINTS = 9

# Small-gain and matrix bounds
BOUND_SLACK = 1e-8

# Homotopy continuation
HOMOTOPY_STEPS = 64
HOMOTOPY_MIN_STEPS = 8
CORRECTOR_TOL = 1e-10
CORRECTOR_MAX_ITER = 60
CORRECTOR_DAMPING = (1.0, 0.5, 0.25)
FD_REL_STEP = 1e-6
MIN_MU_STEP = 1e-8
DEFAULT_MU_MAX = 5.0

# Gradient descent helper
GD_MAX_ITER = 10 ** 4
GD_INITIAL_STEP = 1e-2
GD_GRAD_TOL = 1e-8

# Check suite
CHECK_SEED = 0
CHECK_DIRECTIONS = 10
CHECK_TAUS = (0.1, 1.0, 10.0)
CHECK_FLOW_TIMES = (0.1, 1.0, 10.0)

# Default sweep for the moments command when no grid is given
DEFAULT_TAU_START = 0.01
DEFAULT_TAU_POINTS = 100
DEFAULT_TAU_MARGIN_FACTOR = 5.0
DEFAULT_TAU_END = 1.0      # used when every frequency vanishes

# Default coupling scales for back-action sweeps of general composite configs
DEFAULT_SCALE_GRID = "0:1:11"

# Exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_NUMERICAL_ERROR = 2
EXIT_VIOLATION = 3
