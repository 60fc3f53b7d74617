"""Numerical tolerances shared across the package."""

IDENTITY_TOL = 1e-9      # moment identities, normalisation
ROOT_TOL = 1e-8          # location of q_c, crossings
ARG_TOL = 1e-10          # bisection in the argument (s(q), h_star)
CONCAVITY_TOL = 1e-7     # midpoint concavity test
ATOM_PROB_TOL = 1e-12    # atom probabilities must sum to one
TRANSVERSAL_TOL = 1e-6   # derivative gap separating transversal crossings
BOUNDARY_TOL = 1e-12     # sign decisions treated as "at boundary"

SCAN_POINTS = 256        # sign scan before bisection
SEGMENT_POINTS = 512     # branch-label grid for segmentation
REFINE_FACTOR = 4        # one automatic refinement of a scan grid

LIVE_NODE_WARN = 10_000_000
LIVE_NODE_BUDGET = 2 ** 22   # default planning budget for estimators
SURVIVAL_ATTEMPTS = 10_000
ENUMERATION_LIMIT = 10_000_000
