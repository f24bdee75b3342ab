"""Why unconstrained low-rank ghost correction is ill-posed.

Interleaved EPI measures the even lines with one readout polarity and the
odd lines with the other. Treating the two polarities as separate k-spaces
and asking for a low-rank lifted matrix sounds like enough to fill in the
missing lines. It is not: negating every unmeasured line of both k-spaces
leaves every singular value of the lifted matrix unchanged, so a solution
and its sign-flipped twin always score the same. The straight line between
them passes through the zero-filled pair, which is exactly the ghosted
conventional reconstruction.

Run with ``python demos/sign_flip_ambiguity.py``.
"""

import numpy as np

from slmepi.cli import lifted_rank_estimate, phantom_pair
from slmepi.lifting import NeighborhoodSpec
from slmepi.regularizers import NUCLEAR, RANK_RESIDUAL, Regularizer
from slmepi.theory import landscape_scan, make_flipped_pair, verify_theorem1

n = NeighborhoodSpec(2)

# A ghost-free pair: the fully sampled coil k-space each polarity would
# produce, including a smooth phase difference between the two.
pair = phantom_pair(size=64, nc=8)
flipped = make_flipped_pair(pair)

for kind in ("C", "S"):
    rep = verify_theorem1(pair, n, kind)
    print(f"{kind}-matrix: {rep.sv_original.size} singular values, "
          f"largest relative change under the flip {rep.max_rel_diff:.1e}")

# Cost along alpha * pair + (1 - alpha) * flipped. alpha = 0.5 is zero-filling.
alphas = np.linspace(0, 1, 11)
r = lifted_rank_estimate(pair, n, "C")
for reg in (Regularizer(NUCLEAR), Regularizer(RANK_RESIDUAL, r)):
    scan = landscape_scan(pair, flipped, reg, n, "C", alphas)
    c0 = scan[0][1]
    label = "nuclear norm" if reg.kind == NUCLEAR else f"rank residual (r={r})"
    print(f"\n{label}: cost relative to the ghost-free pair")
    for a, c in scan:
        print(f"  alpha={a:.1f}  {c / c0:8.3f}")

# The convex penalty never rises above the endpoints, so zero-filling is as
# good as the truth. The rank residual has two equally deep minima at the
# pair and its twin, and a ridge at the zero-filled point.
