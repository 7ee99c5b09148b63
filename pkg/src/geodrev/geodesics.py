"""Geodesic integration used as an independent dynamical oracle.

The spray coefficients G1, G2 come from nested central differences of the
energy F^2, never from the symbolic pipeline, so trajectory-level checks
are independent of the closed-form machinery they confirm.  Reversibility
of a configuration is probed by running a geodesic forward, relaunching it
backward from the endpoint and measuring the unparametrized distance
between the two paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import IsothermalMetric, MetricBundle
from .runtime import ordered_map


class SingularHessianError(ValueError):
    """The numerically computed fiber Hessian of F^2 was not positive definite."""


@dataclass(frozen=True)
class GeodesicPath:
    samples: np.ndarray      # (n, 2) base points
    velocities: np.ndarray   # (n, 2) matching velocities
    x0: tuple
    y0: tuple
    h: float
    duration: float
    truncated: bool          # True when the path left the domain rectangle early


# ---------------------------------------------------------------------------
# Norm evaluation (vectorized over batches of (x, y) pairs)


def _norm_batch(bundle: MetricBundle, x1, x2, y1, y2):
    env = {"x1": x1, "x2": x2}
    alpha = np.exp(bundle.metric.nu.eval(env)) * np.hypot(y1, y2)
    beta = bundle.form.b1.eval(env) * y1 + bundle.form.b2.eval(env) * y2
    return alpha * bundle.phi.phi(s=beta / alpha)


def finsler_norm(bundle: MetricBundle, x, y) -> float:
    """F(x, y) for a single base point and nonzero tangent vector."""
    if y[0] == 0.0 and y[1] == 0.0:
        raise ValueError("tangent vector must be nonzero")
    return float(_norm_batch(bundle, float(x[0]), float(x[1]), float(y[0]), float(y[1])))


def _energy_batch(bundle: MetricBundle, pts: np.ndarray) -> np.ndarray:
    """F^2 on rows (x1, x2, y1, y2)."""
    values = _norm_batch(bundle, pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3])
    return values * values


# ---------------------------------------------------------------------------
# Spray coefficients by nested central differences of F^2


# Row layout of the finite-difference stencil on (x1, x2, y1, y2):
#   0        center
#   1..4     y1 +/-, y2 +/-            (fiber second differences)
#   5..8     (y1, y2) in (++, +-, -+, --) (fiber cross difference)
#   9..12    x1 +/-, x2 +/-            (base first differences)
#   13..28   four-point blocks for d2/dx_k dy_i, (k, i) row-major
_STENCIL = np.zeros((29, 4))
_STENCIL[1:5] = [(0, 0, 1, 0), (0, 0, -1, 0), (0, 0, 0, 1), (0, 0, 0, -1)]
_STENCIL[5:9] = [(0, 0, 1, 1), (0, 0, 1, -1), (0, 0, -1, 1), (0, 0, -1, -1)]
_STENCIL[9:13] = [(1, 0, 0, 0), (-1, 0, 0, 0), (0, 1, 0, 0), (0, -1, 0, 0)]
_row = 13
for _k in (0, 1):
    for _i in (2, 3):
        for _sx, _sy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            _STENCIL[_row, _k] = _sx
            _STENCIL[_row, _i] = _sy
            _row += 1
del _row, _k, _i, _sx, _sy


def spray(bundle: MetricBundle, x, y):
    """Coefficients (G1, G2) of the geodesic equation x'' = -2 G(x, x')."""
    x1, x2 = float(x[0]), float(x[1])
    y1, y2 = float(y[0]), float(y[1])
    speed = float(np.hypot(y1, y2))
    if speed == 0.0:
        raise ValueError("tangent vector must be nonzero")
    hy = 1e-4 * speed
    hx = 1e-5 * max(1.0, bundle.metric.domain.extent)

    pts = np.array([x1, x2, y1, y2]) + _STENCIL * np.array([hx, hx, hy, hy])
    L = _energy_batch(bundle, pts)

    h11 = (L[1] - 2.0 * L[0] + L[2]) / hy**2
    h22 = (L[3] - 2.0 * L[0] + L[4]) / hy**2
    h12 = (L[5] - L[6] - L[7] + L[8]) / (4.0 * hy**2)
    det = h11 * h22 - h12 * h12
    if h11 <= 0.0 or det <= 0.0:
        raise SingularHessianError(
            f"fiber Hessian of F^2 not positive definite at x=({x1}, {x2}), y=({y1}, {y2})"
        )
    lx1 = (L[9] - L[10]) / (2.0 * hx)
    lx2 = (L[11] - L[12]) / (2.0 * hx)
    scale = 4.0 * hx * hy
    m11 = (L[13] - L[14] - L[15] + L[16]) / scale  # d2L/dx1 dy1
    m12 = (L[17] - L[18] - L[19] + L[20]) / scale  # d2L/dx1 dy2
    m21 = (L[21] - L[22] - L[23] + L[24]) / scale  # d2L/dx2 dy1
    m22 = (L[25] - L[26] - L[27] + L[28]) / scale  # d2L/dx2 dy2
    rhs1 = m11 * y1 + m21 * y2 - lx1
    rhs2 = m12 * y1 + m22 * y2 - lx2
    two_g1 = (h22 * rhs1 - h12 * rhs2) / det
    two_g2 = (h11 * rhs2 - h12 * rhs1) / det
    return 0.5 * two_g1, 0.5 * two_g2


# ---------------------------------------------------------------------------
# Fixed-step 4th order integration


def _rk4(accel, domain, x0, y0, T, h):
    n = max(1, int(round(T / h)))
    xs = np.empty((n + 1, 2))
    ys = np.empty((n + 1, 2))
    state = np.array([x0[0], x0[1], y0[0], y0[1]], dtype=float)
    xs[0], ys[0] = state[:2], state[2:]
    truncated = False

    def rate(z):
        ax, ay = accel(z[:2], z[2:])
        return np.array([z[2], z[3], ax, ay])

    count = 0
    for step in range(n):
        k1 = rate(state)
        k2 = rate(state + 0.5 * h * k1)
        k3 = rate(state + 0.5 * h * k2)
        k4 = rate(state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not domain.contains(state[0], state[1]):
            truncated = True
            break
        count = step + 1
        xs[count], ys[count] = state[:2], state[2:]
    return xs[: count + 1], ys[: count + 1], truncated, count * h


def integrate(bundle: MetricBundle, x0, y0, T: float, h: float) -> GeodesicPath:
    """Integrate x'' = -2 G(x, x') from (x0, y0) for duration T with fixed step h."""
    if h <= 0 or T <= 0:
        raise ValueError("T and h must be positive")

    def accel(x, y):
        g1, g2 = spray(bundle, x, y)
        return -2.0 * g1, -2.0 * g2

    xs, ys, truncated, covered = _rk4(accel, bundle.metric.domain, x0, y0, T, h)
    return GeodesicPath(xs, ys, tuple(x0), tuple(y0), h, covered, truncated)


def riemann_geodesic(metric: IsothermalMetric, x0, y0, T: float, h: float) -> GeodesicPath:
    """Geodesic of the conformal factor alone, via closed-form Christoffels."""
    if h <= 0 or T <= 0:
        raise ValueError("T and h must be positive")
    nu1, nu2 = metric.nu1, metric.nu2

    def accel(x, y):
        env = {"x1": x[0], "x2": x[1]}
        n1 = nu1.eval(env)
        n2 = nu2.eval(env)
        a1 = -(n1 * y[0] * y[0] + 2.0 * n2 * y[0] * y[1] - n1 * y[1] * y[1])
        a2 = -(-n2 * y[0] * y[0] + 2.0 * n1 * y[0] * y[1] + n2 * y[1] * y[1])
        return a1, a2

    xs, ys, truncated, covered = _rk4(accel, metric.domain, x0, y0, T, h)
    return GeodesicPath(xs, ys, tuple(x0), tuple(y0), h, covered, truncated)


# ---------------------------------------------------------------------------
# Unparametrized path comparison


def _points_to_polyline(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest location on the polyline."""
    if len(poly) == 1:
        return np.linalg.norm(points - poly[0], axis=1)
    p = poly[:-1]
    d = poly[1:] - p
    lensq = np.sum(d * d, axis=1)
    lensq = np.where(lensq == 0.0, 1.0, lensq)
    w = points[:, None, :] - p[None, :, :]
    tpar = np.clip(np.sum(w * d[None, :, :], axis=2) / lensq[None, :], 0.0, 1.0)
    proj = p[None, :, :] + tpar[:, :, None] * d[None, :, :]
    dist = np.linalg.norm(points[:, None, :] - proj, axis=2)
    return np.min(dist, axis=1)


def path_distance(a: GeodesicPath, b: GeodesicPath) -> float:
    """Symmetric mean nearest-point distance between two sampled paths.

    Insensitive to parametrization and to sample order by construction.
    """
    if len(a.samples) == 0 or len(b.samples) == 0:
        raise ValueError("paths must be non-empty")
    d_ab = float(np.mean(_points_to_polyline(a.samples, b.samples)))
    d_ba = float(np.mean(_points_to_polyline(b.samples, a.samples)))
    return 0.5 * (d_ab + d_ba)


# ---------------------------------------------------------------------------
# Reversibility probe


def _reverse_arc_length(bundle: MetricBundle, path: GeodesicPath) -> float:
    """Length of the forward path measured by the reverse norm F(x, -y)."""
    deltas = np.diff(path.samples, axis=0)
    mids = 0.5 * (path.samples[:-1] + path.samples[1:])
    keep = np.any(deltas != 0.0, axis=1)
    if not np.any(keep):
        return 0.0
    values = _norm_batch(
        bundle, mids[keep, 0], mids[keep, 1], -deltas[keep, 0], -deltas[keep, 1]
    )
    return float(np.sum(values))


def reversibility_error(bundle: MetricBundle, x0, y0, T: float, h: float) -> float:
    """Unparametrized distance between a geodesic and its reverse relaunch.

    The forward run ends at (x_T, y_T); the probe restarts at (x_T, -y_T)
    for the duration that the reverse norm assigns to the forward path, so
    a reversible structure retraces the same set of points.
    """
    forward = integrate(bundle, x0, y0, T, h)
    x_end = forward.samples[-1]
    v_end = forward.velocities[-1]
    back_speed = finsler_norm(bundle, x_end, -v_end)
    t_back = _reverse_arc_length(bundle, forward) / back_speed
    t_back = max(t_back, h)
    backward = integrate(bundle, x_end, -v_end, t_back, h)
    return path_distance(forward, backward)


def reversibility_scan(
    bundle: MetricBundle, x0, T: float, h: float, n_directions: int
) -> list[tuple[tuple[float, float], float]]:
    """Probe reversibility along unit directions fanned around the base point."""
    angles = 2.0 * np.pi * np.arange(n_directions) / n_directions + 0.137

    def probe(angle):
        y0 = (float(np.cos(angle)), float(np.sin(angle)))
        return y0, reversibility_error(bundle, x0, y0, T, h)

    return ordered_map(probe, angles)
