"""Assembly and validation of the norm F = alpha * phi(beta/alpha).

The Riemannian factor is isothermal, a_ij = e^{2 nu} delta_ij, the linear
form is beta = b1*y^1 + b2*y^2 and the profile phi is a scalar field in s
defined on the open interval (-b0, b0).  On the unit circle bundle the norm
restricts to p(x, t) = phi(beta(x, t)) with

    beta   = e^{-nu} * (b1*cos t + b2*sin t)
    beta_t = e^{-nu} * (-b1*sin t + b2*cos t)
    b^2    = e^{-2 nu} * (b1^2 + b2^2)

and the identity beta_t^2 = b^2 - beta^2 holds pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .scalarfield import (
    EvalDomainError,
    ScalarField,
    Var,
    add,
    sub,
    mul,
    neg,
    const,
    substitute,
)

PHI_VAR = "s"
BASE_VARS = ("x1", "x2")


class FinslerValidationError(ValueError):
    """Raised when an operation requires a bundle that failed validation."""


def zero_threshold(eps_zero: float, scale: float) -> float:
    """Scale-aware tolerance for deciding that a sampled quantity vanishes."""
    return eps_zero * (1.0 + abs(scale))


# ---------------------------------------------------------------------------
# Profile phi


class PhiFunction:
    """Profile phi(s) with symbolic derivatives to order three and bound b0."""

    def __init__(self, phi: ScalarField, b0: float):
        if b0 <= 0:
            raise ValueError("b0 must be positive")
        if phi.variables != (PHI_VAR,):
            raise ValueError(f"phi must be a field in the single variable {PHI_VAR!r}")
        self.phi = phi
        self.d1 = phi.diff(PHI_VAR)
        self.d2 = self.d1.diff(PHI_VAR)
        self.d3 = self.d2.diff(PHI_VAR)
        self.b0 = float(b0)

    @classmethod
    def from_text(cls, text: str, b0: float) -> "PhiFunction":
        return cls(ScalarField.parse(text, (PHI_VAR,)), b0)

    @classmethod
    def randers(cls, b0: float = 0.9) -> "PhiFunction":
        return cls.from_text("1 + s", b0)

    @classmethod
    def matsumoto(cls, b0: float = 0.4) -> "PhiFunction":
        return cls.from_text("1 / (1 - s)", b0)

    @classmethod
    def even_polynomial(cls, coeffs, b0: float) -> "PhiFunction":
        """Profile sum_k coeffs[k] * s^(2k); even by construction."""
        parts = [f"{c!r} * s^{2 * k}" if k else repr(float(c)) for k, c in enumerate(coeffs)]
        return cls.from_text(" + ".join(parts), b0)

    @classmethod
    def even_plus_linear(cls, even_text: str, eps: float, b0: float) -> "PhiFunction":
        """Profile F0(s) + eps*s for an even F0 given as an expression in s."""
        return cls.from_text(f"({even_text}) + {eps!r} * s", b0)

    def check_s(self, s) -> None:
        if np.any(np.abs(np.asarray(s, dtype=float)) >= self.b0):
            raise EvalDomainError(f"|s| >= b0 = {self.b0}")

    def __repr__(self) -> str:
        return f"PhiFunction({self.phi!r}, b0={self.b0})"


def reverse_phi(phi: PhiFunction) -> PhiFunction:
    """Profile of the reverse norm F(x, -y): s -> phi(-s), same b0."""
    flipped = substitute(phi.phi.expr, PHI_VAR, neg(Var(PHI_VAR)))
    return PhiFunction(ScalarField(flipped, (PHI_VAR,)), phi.b0)


# ---------------------------------------------------------------------------
# Validation of the positivity conditions


@dataclass(frozen=True)
class ValidationReport:
    min_margin_ec1: float   # min of phi - s*phi' + (b^2 - s^2)*phi'' over |s| <= b < b0
    min_margin_ec2: float   # min of phi - s*phi' over (-b0, b0)
    min_phi: float          # min of phi over (-b0, b0)
    passed: bool
    witness: dict

    def as_text(self) -> str:
        lines = [
            f"finsler validation: {'PASS' if self.passed else 'FAIL'}",
            f"min_margin_ec1 = {self.min_margin_ec1:.12g}",
            f"min_margin_ec2 = {self.min_margin_ec2:.12g}",
            f"min_phi = {self.min_phi:.12g}",
        ]
        if self.witness:
            pieces = ", ".join(f"{k}={v:.12g}" for k, v in self.witness.items())
            lines.append(f"witness: {pieces}")
        return "\n".join(lines)


def _triangular_grid(b0: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample pairs (s, b) with |s| <= b < b0, b strictly inside the interval."""
    bs = b0 * (np.arange(1, n + 1) / (n + 1.0))
    s_list = []
    b_list = []
    for b in bs:
        s = np.linspace(-b, b, n)
        s_list.append(s)
        b_list.append(np.full_like(s, b))
    return np.concatenate(s_list), np.concatenate(b_list)


def _locate_domain_witness(phi: PhiFunction, s_values: np.ndarray) -> dict:
    for s in s_values:
        try:
            phi.phi(s=float(s))
            phi.d1(s=float(s))
            phi.d2(s=float(s))
        except EvalDomainError:
            return {"s": float(s)}
    return {}


def validate_finsler(phi: PhiFunction, grid_n: int = 201) -> ValidationReport:
    """Check positivity of phi, of phi - s*phi' and of the full convexity margin.

    The convexity margin phi - s*phi' + (b^2 - s^2)*phi'' is evaluated on a
    triangular grid {|s| <= b < b0}; the other two quantities on (-b0, b0).
    A pole of phi inside the interval is reported as a failure with witness.
    """
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    b0 = phi.b0
    edge = b0 * grid_n / (grid_n + 1.0)
    s_line = np.linspace(-edge, edge, 2 * grid_n + 1)
    s_tri, b_tri = _triangular_grid(b0, grid_n)
    try:
        phi_line = np.asarray(phi.phi(s=s_line), dtype=float)
        d1_line = np.asarray(phi.d1(s=s_line), dtype=float)
        ec2 = phi_line - s_line * d1_line
        ec1 = (
            np.asarray(phi.phi(s=s_tri), dtype=float)
            - s_tri * np.asarray(phi.d1(s=s_tri), dtype=float)
            + (b_tri * b_tri - s_tri * s_tri) * np.asarray(phi.d2(s=s_tri), dtype=float)
        )
    except EvalDomainError:
        witness = _locate_domain_witness(phi, np.concatenate([s_line, s_tri]))
        return ValidationReport(
            min_margin_ec1=float("-inf"),
            min_margin_ec2=float("-inf"),
            min_phi=float("-inf"),
            passed=False,
            witness=witness or {"s": float("nan")},
        )

    bad = ~(np.isfinite(ec1).all() and np.isfinite(ec2).all() and np.isfinite(phi_line).all())
    if bad:
        witness = _locate_domain_witness(phi, np.concatenate([s_line, s_tri]))
        return ValidationReport(float("-inf"), float("-inf"), float("-inf"), False, witness)

    i1 = int(np.argmin(ec1))
    i2 = int(np.argmin(ec2))
    i3 = int(np.argmin(phi_line))
    min_ec1 = float(ec1[i1])
    min_ec2 = float(ec2[i2])
    min_phi = float(phi_line[i3])
    passed = min_ec1 > 0.0 and min_ec2 > 0.0 and min_phi > 0.0
    worst = min(
        (min_ec1, {"s": float(s_tri[i1]), "b": float(b_tri[i1])}),
        (min_ec2, {"s": float(s_line[i2])}),
        (min_phi, {"s": float(s_line[i3])}),
        key=lambda pair: pair[0],
    )
    return ValidationReport(min_ec1, min_ec2, min_phi, passed, worst[1])


# ---------------------------------------------------------------------------
# Even/odd split of the profile


@dataclass(frozen=True)
class EvenOddDecomposition:
    even: ScalarField
    odd: ScalarField
    is_class_A_shape: bool  # odd part is a constant multiple of s
    k2: Optional[float]     # twice that constant when the shape holds


def even_odd_decompose(
    phi: PhiFunction, n_samples: int = 201, eps_zero: float = 1e-9
) -> EvenOddDecomposition:
    """Split phi into even and odd parts and test whether odd(s)/s is constant."""
    s = Var(PHI_VAR)
    flipped = substitute(phi.phi.expr, PHI_VAR, neg(s))
    half = const(0.5)
    even = ScalarField(mul(half, add(phi.phi.expr, flipped)), (PHI_VAR,))
    odd = ScalarField(mul(half, sub(phi.phi.expr, flipped)), (PHI_VAR,))
    edge = phi.b0 * n_samples / (n_samples + 1.0)
    grid = np.linspace(0.05 * edge, edge, n_samples)
    ratios = 2.0 * np.asarray(odd(s=grid), dtype=float) / grid
    spread = float(np.max(ratios) - np.min(ratios))
    scale = float(np.max(np.abs(ratios)))
    constant = spread <= zero_threshold(eps_zero, scale)
    k2 = float(np.mean(ratios)) if constant else None
    return EvenOddDecomposition(even, odd, constant, k2)


# ---------------------------------------------------------------------------
# Base geometry


@dataclass(frozen=True)
class Rectangle:
    x1min: float
    x1max: float
    x2min: float
    x2max: float

    def contains(self, x1: float, x2: float) -> bool:
        return self.x1min <= x1 <= self.x1max and self.x2min <= x2 <= self.x2max

    @property
    def extent(self) -> float:
        return max(self.x1max - self.x1min, self.x2max - self.x2min)


class IsothermalMetric:
    """Riemannian factor a_ij = e^{2 nu} delta_ij on a coordinate rectangle."""

    def __init__(self, nu: ScalarField, domain: Rectangle):
        if nu.variables != BASE_VARS:
            raise ValueError(f"nu must be a field in {BASE_VARS}")
        self.nu = nu
        self.nu1 = nu.diff("x1")
        self.nu2 = nu.diff("x2")
        self.nu11 = self.nu1.diff("x1")
        self.nu22 = self.nu2.diff("x2")
        self.domain = domain

    @classmethod
    def from_text(cls, text: str, domain: Rectangle) -> "IsothermalMetric":
        return cls(ScalarField.parse(text, BASE_VARS), domain)


class LinearForm:
    """Linear form beta = b1*y^1 + b2*y^2 with symbolic first partials."""

    def __init__(self, b1: ScalarField, b2: ScalarField):
        for f in (b1, b2):
            if f.variables != BASE_VARS:
                raise ValueError(f"form components must be fields in {BASE_VARS}")
        self.b1 = b1
        self.b2 = b2
        self.db1_d1 = b1.diff("x1")
        self.db1_d2 = b1.diff("x2")
        self.db2_d1 = b2.diff("x1")
        self.db2_d2 = b2.diff("x2")

    @classmethod
    def from_text(cls, b1_text: str, b2_text: str) -> "LinearForm":
        return cls(ScalarField.parse(b1_text, BASE_VARS), ScalarField.parse(b2_text, BASE_VARS))


@dataclass(frozen=True)
class Sampling:
    n_x1: int = 21
    n_x2: int = 21
    n_t: int = 64
    n_s: int = 201
    eps_zero: float = 1e-9

    def doubled(self) -> "Sampling":
        return Sampling(2 * self.n_x1, 2 * self.n_x2, 2 * self.n_t, 2 * self.n_s, self.eps_zero)


@dataclass(frozen=True)
class BundleValidationReport:
    phi_report: ValidationReport
    b_sup: float
    b_margin: float  # b0 - sup of b(x); must stay strictly positive
    passed: bool

    def as_text(self) -> str:
        lines = [self.phi_report.as_text()]
        lines.append(f"b_sup = {self.b_sup:.12g}")
        lines.append(f"b_margin = {self.b_margin:.12g}")
        lines.append(f"bundle validation: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


class MetricBundle:
    """The triple (isothermal metric, linear form, profile) plus sampling policy."""

    def __init__(
        self,
        metric: IsothermalMetric,
        form: LinearForm,
        phi: PhiFunction,
        sampling: Sampling = Sampling(),
    ):
        self.metric = metric
        self.form = form
        self.phi = phi
        self.sampling = sampling
        self._report: Optional[BundleValidationReport] = None

    def base_grid(self, oversample: int = 1) -> tuple[np.ndarray, np.ndarray]:
        d = self.metric.domain
        xs1 = np.linspace(d.x1min, d.x1max, oversample * self.sampling.n_x1)
        xs2 = np.linspace(d.x2min, d.x2max, oversample * self.sampling.n_x2)
        return xs1, xs2

    def t_grid(self, factor: int = 1) -> np.ndarray:
        return np.linspace(0.0, 2.0 * np.pi, factor * self.sampling.n_t, endpoint=False)

    def b_norm(self, x1, x2):
        """Riemannian length b(x) of the form, e^{-nu} * sqrt(b1^2 + b2^2)."""
        env = {"x1": x1, "x2": x2}
        b1 = self.form.b1.eval(env)
        b2 = self.form.b2.eval(env)
        return np.exp(-self.metric.nu.eval(env)) * np.hypot(b1, b2)

    def b_sup(self) -> float:
        xs1, xs2 = self.base_grid(oversample=3)
        g1, g2 = np.meshgrid(xs1, xs2, indexing="ij")
        return float(np.max(self.b_norm(g1.ravel(), g2.ravel())))

    def validate(self) -> BundleValidationReport:
        if self._report is None:
            phi_report = validate_finsler(self.phi, max(self.sampling.n_s, 64))
            b_sup = self.b_sup()
            margin = self.phi.b0 - b_sup
            self._report = BundleValidationReport(
                phi_report=phi_report,
                b_sup=b_sup,
                b_margin=margin,
                passed=phi_report.passed and margin > 0.0,
            )
        return self._report

    def require_valid(self) -> None:
        report = self.validate()
        if not report.passed:
            raise FinslerValidationError(report.as_text())


# ---------------------------------------------------------------------------
# Indicatrix-level quantities


def beta_on_indicatrix(bundle: MetricBundle, x, t):
    """Return (beta, beta_t, b^2) at base point x and fiber angle t.

    Accepts scalars or numpy arrays for t (and for the components of x).
    """
    x1, x2 = x
    env = {"x1": x1, "x2": x2}
    e_m = np.exp(-bundle.metric.nu.eval(env))
    b1 = bundle.form.b1.eval(env)
    b2 = bundle.form.b2.eval(env)
    ct, st = np.cos(t), np.sin(t)
    beta = e_m * (b1 * ct + b2 * st)
    beta_t = e_m * (-b1 * st + b2 * ct)
    bsq = e_m * e_m * (b1 * b1 + b2 * b2)
    return beta, beta_t, bsq


def indicatrix_p(bundle: MetricBundle, x, t):
    """Return (p, r) = (phi(beta), phi(-beta)) at (x, t); r(x, t) = p(x, t + pi)."""
    beta, _, _ = beta_on_indicatrix(bundle, x, t)
    bundle.phi.check_s(beta)
    p = bundle.phi.phi(s=beta)
    r = bundle.phi.phi(s=-beta)
    return p, r
