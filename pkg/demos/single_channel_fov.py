"""Single-channel correction needs empty space in the field of view.

With one coil there is no sensitivity encoding to separate an object from
its half-FOV ghost. The only prior left is the object's limited support:
a calibration nullspace learned from the central lines annihilates
k-space of anything confined to that support. If the object fits in half
the FOV along phase encoding, the ghost lands in empty space and the
support prior can remove it. If the object fills the FOV, ghost and object
overlap and the prior cannot tell them apart.

Run with ``python demos/single_channel_fov.py``.
"""

from slmepi.evaluation import (
    SINGLE_CHANNEL_NULLSPACE_RANK,
    ZERO_FILL,
    run_experiment_matrix,
    single_channel_methods,
    single_channel_scenarios,
)

report = run_experiment_matrix(single_channel_scenarios(), single_channel_methods(), [1],
                               rank_hint=SINGLE_CHANNEL_NULLSPACE_RANK)

for scn in ("loose_fov_1ch", "tight_fov_1ch"):
    zf = report.get(scn, ZERO_FILL, 1)
    ac = report.get(scn, "ac_loraks", 1)
    print(f"{scn}: zero-fill NRMSE {zf.nrmse:.3f}, ac_loraks {ac.nrmse:.3f} "
          f"(ratio {ac.nrmse / zf.nrmse:.2f})")

# Expect a large improvement for the loose FOV and little for the tight one.
