import mpmath
import numpy as np
import pytest

from posecp.rng import make_rng
from posecp.se3_geometry import quat_to_matrix, rodrigues
from posecp.trajectory import Trajectory


def random_quats(rng, n):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_rotations(rng, n):
    return quat_to_matrix(random_quats(rng, n))


def constant_motion_trajectory(n, step_rotvec, step_trans, pid="P", start=None):
    """Trajectory whose inter-frame motion is exactly the same SE(3) increment."""
    dR = rodrigues(np.asarray(step_rotvec, float))
    dt = np.asarray(step_trans, float)
    R = np.empty((n, 3, 3))
    t = np.empty((n, 3))
    R[0], t[0] = (np.eye(3), np.zeros(3)) if start is None else start
    for i in range(1, n):
        R[i] = R[i - 1] @ dR
        t[i] = t[i - 1] + R[i - 1] @ dt
    return Trajectory(pid, np.arange(n), R, t)


def random_walk_trajectory(rng, n, pid="P", step=0.05, ang=0.05):
    R = np.empty((n, 3, 3))
    t = np.cumsum(rng.standard_normal((n, 3)) * step, axis=0)
    incr = rodrigues(rng.standard_normal((n, 3)) * ang)
    R[0] = np.eye(3)
    for i in range(1, n):
        R[i] = R[i - 1] @ incr[i]
    return Trajectory(pid, np.arange(n) * 2 + 3, R, t)


@pytest.fixture
def rng():
    return make_rng(12345, "tests")


mpmath.mp.dps = 40


def mp_quat_matrix(q):
    w, x, y, z = (mpmath.mpf(float(v)) for v in q)
    n = mpmath.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return mpmath.matrix([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def mp_quat_angle(qa, qb):
    """Angle of the relative rotation between two quaternions, high precision."""
    a = [mpmath.mpf(float(v)) for v in qa]
    b = [mpmath.mpf(float(v)) for v in qb]
    na = mpmath.sqrt(sum(v * v for v in a))
    nb = mpmath.sqrt(sum(v * v for v in b))
    a = [v / na for v in a]
    b = [v / nb for v in b]
    # conj(a) * b
    w = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
    x = a[0] * b[1] - a[1] * b[0] - a[2] * b[3] + a[3] * b[2]
    y = a[0] * b[2] + a[1] * b[3] - a[2] * b[0] - a[3] * b[1]
    z = a[0] * b[3] - a[1] * b[2] + a[2] * b[1] - a[3] * b[0]
    return 2 * mpmath.atan2(mpmath.sqrt(x * x + y * y + z * z), abs(w))


def mp_scores(qa, ta, qb, tb, wr, wt):
    ang = mp_quat_angle(qa, qb)
    dt2 = sum((mpmath.mpf(float(u)) - mpmath.mpf(float(v))) ** 2 for u, v in zip(ta, tb))
    Ra, Rb = mp_quat_matrix(qa), mp_quat_matrix(qb)
    fro2 = sum((Ra[i, j] - Rb[i, j]) ** 2 for i in range(3) for j in range(3))
    wr, wt = mpmath.mpf(wr), mpmath.mpf(wt)
    return float(mpmath.sqrt(wr * ang**2 + wt * dt2)), float(mpmath.sqrt(wr * fro2 + wt * dt2))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            if "test_acceptance.py::test_criterion_" not in getattr(rep, "nodeid", "") or rep.when != "call":
                continue
            name = rep.nodeid.split("::")[-1]
            num = int(name.split("_")[2])
            detail = dict(rep.user_properties).get("detail", "")
            lines.append((num, f"criterion {num}: {'PASS' if rep.passed else 'FAIL'}  {name}  {detail}".rstrip()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
