"""Central configuration values for msddp."""

import os

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Runtime settings (overridable from the environment or a .env file)
THREADS = int(os.getenv('MSDDP_THREADS', 1))                        # worker count for oracle and sweep pools
MAX_GRID_POINTS = int(float(os.getenv('MSDDP_MAX_GRID_POINTS', 1e7)))  # enumeration guard per node
ITERATION_CAP = int(os.getenv('MSDDP_ITERATION_CAP', 10_000))         # default solver iteration cap
LOG_LEVEL = os.getenv('MSDDP_LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('MSDDP_LOG_FILE', '')                            # empty disables the file handler
TRACE_TIMING = os.getenv('MSDDP_TRACE_TIMING', '1') != '0'            # 0 writes ms = 0 in traces

# Oracles
DUAL_CANDIDATES = 16           # q, axis candidates per direction in the convex dual search
TIE_TOLERANCE = 1e-12          # relative slack when collecting tied grid minimizers
CHUNK_ELEMENTS = 2_000_000     # max array elements materialized per enumeration block

# Approximations
WEIGHT_TOLERANCE = 1e-12       # bundle weights vs transition probabilities
DUAL_BOUND_SLACK = 1e-9        # allowed overshoot of ||lambda||_* and rho
HULL_TOLERANCE = 1e-10         # SLSQP tolerance for l2 hull evaluation
HULL_MAX_ITER = 500            # SLSQP iteration cap

# Algorithms
GAP_TOLERANCE = 1e-9           # absolute slack added to eps in the termination test
STALL_WINDOW = 20              # lb_stall stop rule window
STALL_TOLERANCE = 1e-6         # lb_stall stop rule tolerance

# Instances
SPHERE_CANDIDATES = 100_000    # candidate points for spherical cap packing
PROBABILITY_TOLERANCE = 1e-12  # sum of transition probabilities
COST_SAMPLE_POINTS = 64        # per-axis sample size for the nonnegativity check

# Harness
LOG10_THRESHOLD = 1e15         # bound values above this are reported in log10
INSTANCE_VERSION = 1           # instance/result document schema version
