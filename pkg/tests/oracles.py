"""Independent reference computations used by several test files."""
import numpy as np

_GRID = {}


def euler_grid(step_deg=2.0):
    """Rotation matrices (n, 9) on a yaw/pitch/roll grid with the given spacing."""
    if step_deg not in _GRID:
        yaw = np.radians(np.arange(-180.0, 180.0, step_deg))
        pitch = np.radians(np.arange(-90.0, 90.0 + 1e-9, step_deg))
        roll = np.radians(np.arange(-180.0, 180.0, step_deg))
        a, b, c = np.meshgrid(yaw, pitch, roll, indexing="ij")
        a, b, c = a.ravel(), b.ravel(), c.ravel()
        ca, sa, cb, sb, cc, sc = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
        # R = Rz(a) Ry(b) Rx(c)
        r = np.stack([
            ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc,
            sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc,
            -sb, cb * sc, cb * cc,
        ], axis=1)
        _GRID[step_deg] = r
    return _GRID[step_deg]


def grid_procrustes_sse(pred, gt, step_deg=2.0):
    """Smallest sum of squared residuals over grid rotations, each with its best scale and shift.

    For a fixed rotation R the optimal scale is <R, G^T P> / |P|^2 (clamped at 0)
    and the residual is |G|^2 - s^2 |P|^2, so only <R, G^T P> varies over the grid.
    """
    p = pred - pred.mean(axis=0)
    g = gt - gt.mean(axis=0)
    m = (g.T @ p).ravel()
    best = -np.inf
    grid = euler_grid(step_deg)
    for start in range(0, len(grid), 500_000):
        best = max(best, float(np.max(grid[start:start + 500_000] @ m)))
    pp = float(np.sum(p * p))
    s = max(best, 0.0) / pp
    return float(np.sum(g * g)) - s * s * pp
