"""
Arc length versus chord length on SO(3)
=======================================

Two ways to measure a rotation error: the geodesic angle of the relative
rotation, and the Frobenius distance between the matrices. They agree for
small errors and drift apart as the error grows.
"""

import numpy as np

from posecp import Pose, ScoreWeights, euclidean_score, geodesic_score, so3_exp, so3_log

# rotation-only weights, so the scores isolate the rotation term
w_rot = ScoreWeights(w_rot=1.0, w_trans=0.0)
truth = Pose.identity()

print(" theta   geodesic   chordal/sqrt(2)")
for theta in np.linspace(0.1, np.pi, 8):
    pred = Pose(so3_exp([0.0, 0.0, theta]), np.zeros(3))
    geo = geodesic_score(pred, truth, w_rot)
    chord = euclidean_score(pred, truth, w_rot) / np.sqrt(2)
    print(f"{theta:6.3f}   {geo:8.4f}   {chord:8.4f}")

# The chord saturates at 2 (a half turn), the arc keeps growing to pi.

###############################################################################
# The log map near a half turn
# ----------------------------
# Close to pi the usual sin(theta) division loses precision, so the axis is
# recovered from the symmetric part of R instead.

omega = np.array([1.0, -2.0, 2.0]) / 3.0 * (np.pi - 1e-9)
back = so3_log(so3_exp(omega))
print("\nroundtrip error near pi:", np.linalg.norm(back - omega))

###############################################################################
# Full SE(3) score
# ----------------
# Translation enters as a separate squared term.

pred = Pose(so3_exp([np.pi / 3, 0.0, 0.0]), np.array([0.0, 2.0, 0.0]))
print("geodesic score:", geodesic_score(pred, truth), " expected:", np.sqrt((np.pi / 3) ** 2 + 4))
