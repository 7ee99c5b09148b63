"""Closed-form reversibility criterion and classification.

The decision rests on four scalar quantities.  Two depend only on the
profile phi,

    E(s) = s*(phi'(s)*phi''(-s) + phi'(-s)*phi''(s))
           + (phi(-s)*phi''(s) - phi(s)*phi''(-s))
    F(s, b) = (b^2 - s^2)*(phi'(s)*phi''(-s) + phi'(-s)*phi''(s))
              + (phi(-s)*phi'(s) + phi(s)*phi'(-s))

(E is odd in s, F is even), and two depend only on the base data,

    curl21 = d(b2)/dx1 - d(b1)/dx2
    M(x, t) = K1 + K2*cos 2t + K3*sin 2t   (up to the conformal weight e^{-nu})

with K1 = (d1b1 + d2b2)/2, K2 = (d1b1 - d2b2)/2 - (nu1*b1 - nu2*b2),
K3 = (d1b2 + d2b1)/2 - (nu2*b1 + nu1*b2).  Geodesics reverse exactly when
the combined residual  beta_t * E(beta) * M + F(beta, b) * e^{-nu} * curl21
vanishes identically on the unit circle bundle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .metric import (
    IsothermalMetric,
    LinearForm,
    MetricBundle,
    PhiFunction,
    Sampling,
    even_odd_decompose,
    zero_threshold,
)


# ---------------------------------------------------------------------------
# Profile-level quantities


def calE(phi: PhiFunction, s):
    """Odd obstruction E(s); zero exactly for profiles of the form even + c*s."""
    phi.check_s(s)
    pp = phi.phi(s=s)
    pm = phi.phi(s=-s)
    d1p = phi.d1(s=s)
    d1m = phi.d1(s=-s)
    d2p = phi.d2(s=s)
    d2m = phi.d2(s=-s)
    return s * (d1p * d2m + d1m * d2p) + (pm * d2p - pp * d2m)


def calF(phi: PhiFunction, s, b):
    """Even companion F(s, b); zero exactly for even profiles."""
    phi.check_s(s)
    pp = phi.phi(s=s)
    pm = phi.phi(s=-s)
    d1p = phi.d1(s=s)
    d1m = phi.d1(s=-s)
    d2p = phi.d2(s=s)
    d2m = phi.d2(s=-s)
    return (b * b - s * s) * (d1p * d2m + d1m * d2p) + (pm * d1p + pp * d1m)


# ---------------------------------------------------------------------------
# Base-point data shared with the frames module


@dataclass(frozen=True)
class PointData:
    nu: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    e_nu: np.ndarray
    e_mnu: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    db1_dx1: np.ndarray
    db1_dx2: np.ndarray
    db2_dx1: np.ndarray
    db2_dx2: np.ndarray


def point_data(form: LinearForm, metric: IsothermalMetric, x1, x2) -> PointData:
    """Evaluate nu, the form components and all their first partials at x."""
    env = {"x1": x1, "x2": x2}
    nu = metric.nu.eval(env)
    return PointData(
        nu=nu,
        nu1=metric.nu1.eval(env),
        nu2=metric.nu2.eval(env),
        e_nu=np.exp(nu),
        e_mnu=np.exp(-nu),
        b1=form.b1.eval(env),
        b2=form.b2.eval(env),
        db1_dx1=form.db1_d1.eval(env),
        db1_dx2=form.db1_d2.eval(env),
        db2_dx1=form.db2_d1.eval(env),
        db2_dx2=form.db2_d2.eval(env),
    )


def curl21(form: LinearForm, x) -> float:
    """d(b2)/dx1 - d(b1)/dx2 at the base point x."""
    env = {"x1": x[0], "x2": x[1]}
    return form.db2_d1.eval(env) - form.db1_d2.eval(env)


@dataclass(frozen=True)
class MCoefficients:
    K1: float
    K2: float
    K3: float

    def value(self, t):
        return self.K1 + self.K2 * np.cos(2.0 * t) + self.K3 * np.sin(2.0 * t)


def m_coeffs(form: LinearForm, metric: IsothermalMetric, x) -> MCoefficients:
    """Angular Fourier coefficients K1, K2, K3 of the base obstruction."""
    pd = point_data(form, metric, x[0], x[1])
    return _m_coeffs_from_point(pd)


def _m_coeffs_from_point(pd: PointData) -> MCoefficients:
    k1 = 0.5 * (pd.db1_dx1 + pd.db2_dx2)
    k2 = 0.5 * (pd.db1_dx1 - pd.db2_dx2) - (pd.nu1 * pd.b1 - pd.nu2 * pd.b2)
    k3 = 0.5 * (pd.db2_dx1 + pd.db1_dx2) - (pd.nu2 * pd.b1 + pd.nu1 * pd.b2)
    return MCoefficients(k1, k2, k3)


def _m_direct_from_point(pd: PointData, t):
    """Literal evaluation of the base obstruction M at fiber angle t.

    This is the form that appears in the reversibility residual; it carries
    the conformal weight, i.e. it equals e^{-nu} * (K1 + K2 cos2t + K3 sin2t).
    """
    ct, st = np.cos(t), np.sin(t)
    beta = pd.e_mnu * (pd.b1 * ct + pd.b2 * st)
    beta_t = pd.e_mnu * (-pd.b1 * st + pd.b2 * ct)
    block = pd.e_mnu * (
        pd.db1_dx1 * ct * ct
        + st * ct * (pd.db1_dx2 + pd.db2_dx1)
        + pd.db2_dx2 * st * st
    )
    return block + beta_t * (pd.nu2 * ct - pd.nu1 * st) - beta * (pd.nu1 * ct + pd.nu2 * st)


def m_direct(form: LinearForm, metric: IsothermalMetric, x, t):
    pd = point_data(form, metric, x[0], x[1])
    return _m_direct_from_point(pd, t)


# ---------------------------------------------------------------------------
# The reversibility residual


def _residual_from_point(pd: PointData, phi: PhiFunction, t):
    ct, st = np.cos(t), np.sin(t)
    beta = pd.e_mnu * (pd.b1 * ct + pd.b2 * st)
    beta_t = pd.e_mnu * (-pd.b1 * st + pd.b2 * ct)
    b = pd.e_mnu * np.hypot(pd.b1, pd.b2)
    curl = pd.db2_dx1 - pd.db1_dx2
    m = _m_direct_from_point(pd, t)
    return beta_t * calE(phi, beta) * m + calF(phi, beta, b) * pd.e_mnu * curl


def residual(bundle: MetricBundle, x, t):
    """Signed reversibility defect beta_t*E*M + F*e^{-nu}*curl21 at (x, t).

    beta_t is used instead of the unsigned root sqrt(b^2 - beta^2); the two
    agree up to sign by the identity beta_t^2 = b^2 - beta^2, so zero-set
    decisions (which use |residual|) are unaffected.
    """
    pd = point_data(bundle.form, bundle.metric, x[0], x[1])
    return _residual_from_point(pd, bundle.phi, t)


# ---------------------------------------------------------------------------
# Base PDE system and curvature


def pde_residuals(form: LinearForm, metric: IsothermalMetric, x):
    """Left-hand sides (curl, divergence, K2, K3) of the constancy system."""
    pd = point_data(form, metric, x[0], x[1])
    k = _m_coeffs_from_point(pd)
    return (
        pd.db2_dx1 - pd.db1_dx2,
        pd.db1_dx1 + pd.db2_dx2,
        k.K2,
        k.K3,
    )


def integrability_obstruction(metric: IsothermalMetric, x):
    """Laplacian of nu; the constancy system is solvable only where it vanishes."""
    env = {"x1": x[0], "x2": x[1]}
    return metric.nu11.eval(env) + metric.nu22.eval(env)


def gauss_curvature(metric: IsothermalMetric, x):
    """k = -e^{-2 nu} * (nu_11 + nu_22) in isothermal coordinates."""
    env = {"x1": x[0], "x2": x[1]}
    lap = metric.nu11.eval(env) + metric.nu22.eval(env)
    return -np.exp(-2.0 * metric.nu.eval(env)) * lap


# ---------------------------------------------------------------------------
# Classification


class Verdict(enum.Enum):
    CLASS_A = "ClassA"
    CLASS_B = "ClassB"
    ABSOLUTELY_HOMOGENEOUS = "AbsolutelyHomogeneous"
    TRIVIALLY_PROJECTIVELY_FLAT = "TriviallyProjectivelyFlat"
    IRREVERSIBLE = "Irreversible"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class ZeroTest:
    max_abs: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class Classification:
    verdict: Verdict
    evidence: dict
    residual_max: float
    residual_cutoff: float
    k2: Optional[float]

    def as_text(self) -> str:
        lines = [f"verdict: {self.verdict.value}"]
        lines.append(f"{'zero-test':<12} {'max|value|':>14} {'threshold':>14} pass")
        for name, test in self.evidence.items():
            lines.append(
                f"{name:<12} {test.max_abs:>14.6g} {test.threshold:>14.6g} "
                f"{'yes' if test.passed else 'no'}"
            )
        lines.append(
            f"residual_max = {self.residual_max:.6g} "
            f"(irreversible above {self.residual_cutoff:.6g})"
        )
        if self.k2 is not None:
            lines.append(f"k2 = {self.k2:.12g}")
        return "\n".join(lines)


def _zero_test(values: np.ndarray, eps_zero: float) -> ZeroTest:
    peak = float(np.max(np.abs(values)))
    thr = zero_threshold(eps_zero, peak)
    return ZeroTest(peak, thr, peak <= thr)


def classify(bundle: MetricBundle, sampling: Optional[Sampling] = None) -> Classification:
    """Grid-based verdict for the bundle, with the evidence behind it.

    Pattern checks run from the strongest structural property downward:
    an even profile, then the even-plus-linear profile with closed form,
    then the locked-down base (M == 0, curl == 0, constant data), then
    base-projective triviality, and finally a frankly nonzero residual.
    """
    from .frames import directional_grid  # local import: frames also imports us

    bundle.require_valid()
    sampling = sampling or bundle.sampling
    eps0 = sampling.eps_zero
    report = bundle.validate()

    d = bundle.metric.domain
    xs1 = np.linspace(d.x1min, d.x1max, sampling.n_x1)
    xs2 = np.linspace(d.x2min, d.x2max, sampling.n_x2)
    g1, g2 = np.meshgrid(xs1, xs2, indexing="ij")
    X1 = g1.ravel()[:, None]
    X2 = g2.ravel()[:, None]
    t = np.linspace(0.0, 2.0 * np.pi, sampling.n_t, endpoint=False)[None, :]

    pd = point_data(bundle.form, bundle.metric, X1, X2)
    s_grid = np.linspace(-report.b_sup, report.b_sup, sampling.n_s)

    even_gap = bundle.phi.phi(s=s_grid) - bundle.phi.phi(s=-s_grid)
    e_values = calE(bundle.phi, s_grid)
    curl_values = pd.db2_dx1 - pd.db1_dx2
    m_values = _m_direct_from_point(pd, t)
    b_variation = max(
        float(np.ptp(pd.b1)) if np.ndim(pd.b1) else 0.0,
        float(np.ptp(pd.b2)) if np.ndim(pd.b2) else 0.0,
    )
    b_scale = max(float(np.max(np.abs(pd.b1))), float(np.max(np.abs(pd.b2))))
    nu_variation = float(np.ptp(pd.nu)) if np.ndim(pd.nu) else 0.0
    nu_scale = float(np.max(np.abs(pd.nu)))

    derivs = directional_grid(bundle, X1, X2, t)
    m2_values = derivs.p32 - derivs.p1
    residual_values = _residual_from_point(pd, bundle.phi, t)

    evidence = {
        "M2": _zero_test(m2_values, eps0),
        "even": _zero_test(even_gap, eps0),
        "E": _zero_test(e_values, eps0),
        "curl": _zero_test(curl_values, eps0),
        "M": _zero_test(m_values, eps0),
        "b_const": ZeroTest(b_variation, zero_threshold(eps0, b_scale), b_variation <= zero_threshold(eps0, b_scale)),
        "nu_const": ZeroTest(nu_variation, zero_threshold(eps0, nu_scale), nu_variation <= zero_threshold(eps0, nu_scale)),
        "residual": _zero_test(residual_values, eps0),
    }

    residual_max = evidence["residual"].max_abs
    residual_cutoff = 1e3 * evidence["residual"].threshold

    decomposition = even_odd_decompose(bundle.phi, sampling.n_s, eps0)
    k2 = decomposition.k2

    if evidence["even"].passed:
        verdict = Verdict.ABSOLUTELY_HOMOGENEOUS
    elif evidence["E"].passed and evidence["curl"].passed:
        # the profile-level split must agree with the vanishing of E
        assert decomposition.is_class_A_shape, (
            "E vanishes on the grid but the odd part is not a multiple of s"
        )
        verdict = Verdict.CLASS_A
    elif (
        evidence["M"].passed
        and evidence["curl"].passed
        and evidence["b_const"].passed
        and evidence["nu_const"].passed
    ):
        verdict = Verdict.CLASS_B
    elif evidence["M2"].passed:
        verdict = Verdict.TRIVIALLY_PROJECTIVELY_FLAT
    elif residual_max > residual_cutoff:
        verdict = Verdict.IRREVERSIBLE
    else:
        verdict = Verdict.UNDETERMINED

    return Classification(
        verdict=verdict,
        evidence=evidence,
        residual_max=residual_max,
        residual_cutoff=residual_cutoff,
        k2=k2,
    )
