"""Exact 2x2 unimodular matrix algebra for transfer-matrix cocycles.

A matrix is stored as ``exp(log_scale) * [[a, b], [c, d]]`` so that long
products can be renormalized without losing the unit determinant; the
scale is folded out explicitly rather than silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

# Entries are rescaled once they leave this band; products of bounded
# step matrices then never overflow while ordinary matrices keep
# log_scale == 0 exactly.
_RENORM_LIMIT = 1e120

DET_TOL = 1e-6


def _as_values(f) -> Sequence[float]:
    values = getattr(f, "values", f)
    if len(values) == 0:
        raise ValueError("sampler must have at least one value")
    return values


def _scaled(raw: float, log_scale: float) -> float:
    """raw * exp(log_scale) without tripping the float exponent range."""
    if raw == 0.0 or log_scale == 0.0:
        return raw
    log_mag = math.log(abs(raw)) + log_scale
    if log_mag > 709.0:
        return math.copysign(math.inf, raw)
    if log_mag < -745.0:
        return math.copysign(0.0, raw)
    return math.copysign(math.exp(log_mag), raw)


@dataclass(frozen=True)
class TransferMatrix:
    """Real 2x2 matrix ``exp(log_scale) * [[a, b], [c, d]]``."""

    a: float
    b: float
    c: float
    d: float
    log_scale: float = 0.0

    @classmethod
    def identity(cls) -> "TransferMatrix":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def det(self) -> float:
        """Determinant of the represented matrix.

        Exactly 1 in exact arithmetic for step-matrix products; the float
        value loses meaning once the product norm passes ~1e8, since the
        subtraction cancels at that scale (renormalization cannot help).
        """
        raw = self.a * self.d - self.b * self.c
        return _scaled(raw, 2.0 * self.log_scale)

    @property
    def trace(self) -> float:
        """Trace of the represented matrix (+-inf once it leaves float range)."""
        return _scaled(self.a + self.d, self.log_scale)

    def log_abs_trace(self) -> float:
        t = abs(self.a + self.d)
        if t == 0.0:
            return float("-inf")
        return math.log(t) + self.log_scale

    def frobenius_norm(self) -> float:
        s = math.hypot(math.hypot(self.a, self.b), math.hypot(self.c, self.d))
        return s * math.exp(self.log_scale)

    def log_frobenius_norm(self) -> float:
        s = math.hypot(math.hypot(self.a, self.b), math.hypot(self.c, self.d))
        if s == 0.0:
            return float("-inf")
        return math.log(s) + self.log_scale

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        a = self.a * other.a + self.b * other.c
        b = self.a * other.b + self.b * other.d
        c = self.c * other.a + self.d * other.c
        d = self.c * other.b + self.d * other.d
        scale = self.log_scale + other.log_scale
        m = max(abs(a), abs(b), abs(c), abs(d))
        if m > _RENORM_LIMIT:
            a, b, c, d = a / m, b / m, c / m, d / m
            scale += math.log(m)
        return TransferMatrix(a, b, c, d, scale)

    def matrix(self):
        """Entries as a plain nested list, scale folded in."""
        s = math.exp(self.log_scale)
        return [[self.a * s, self.b * s], [self.c * s, self.d * s]]

    def apply(self, vec: Sequence[float]) -> tuple[float, float]:
        x, y = vec
        s = math.exp(self.log_scale)
        return (s * (self.a * x + self.b * y), s * (self.c * x + self.d * y))


def step_matrix(E: float, v: float) -> TransferMatrix:
    """Single-site step ``[[E - v, -1], [1, 0]]``."""
    if not (math.isfinite(E) and math.isfinite(v)):
        raise ValueError(f"step_matrix requires finite inputs, got E={E}, v={v}")
    return TransferMatrix(E - v, -1.0, 1.0, 0.0)


def transfer_product(E: float, f, n: int, offset: int = 0) -> TransferMatrix:
    """Ordered product S_{offset+n-1} ... S_{offset} over a periodic sampler.

    ``f`` may be a sampler object with a ``values`` attribute or a plain
    sequence; site k uses ``values[k mod p]``.
    """
    if n < 1:
        raise ValueError(f"transfer_product requires n >= 1, got {n}")
    values = _as_values(f)
    p = len(values)
    acc = step_matrix(E, values[offset % p])
    for k in range(offset + 1, offset + n):
        acc = step_matrix(E, values[k % p]) @ acc
    return acc


def _check_unimodular(M: TransferMatrix, det_tol: float) -> None:
    # past norm ~1e8 the float determinant is pure cancellation noise,
    # so the check only applies while it is numerically meaningful
    if M.log_frobenius_norm() > 18.4:
        return
    if abs(M.det - 1.0) > det_tol:
        raise ArithmeticError(
            f"matrix determinant {M.det!r} violates the unimodular invariant "
            f"(tolerance {det_tol})"
        )


def spectral_radius(M: TransferMatrix, det_tol: float = DET_TOL) -> float:
    """Spectral radius of a unimodular matrix: 1 on |tr| <= 2, else from the trace."""
    _check_unimodular(M, det_tol)
    return math.exp(log_spectral_radius(M, det_tol=det_tol))


def log_spectral_radius(M: TransferMatrix, det_tol: float = DET_TOL) -> float:
    """log of the spectral radius, stable for very large products."""
    _check_unimodular(M, det_tol)
    t = abs(M.a + M.d)
    # effective |trace| <= 2  <=>  log|t| + log_scale <= log 2
    if t == 0.0 or math.log(t) + M.log_scale <= math.log(2.0):
        return 0.0
    # rho = (|tr| + sqrt(tr^2 - 4)) / 2 with tr = t * exp(log_scale)
    x = 4.0 * math.exp(-2.0 * M.log_scale) / (t * t)  # in (0, 1]
    return math.log(t) + M.log_scale + math.log1p(math.sqrt(max(0.0, 1.0 - x))) - math.log(2.0)


def largest_singular_value(M: TransferMatrix, det_tol: float = DET_TOL) -> float:
    """Largest singular value of a unimodular matrix.

    Uses mu1^2 = (s + sqrt(s^2 - 4)) / 2 with s the squared Frobenius
    norm, valid because the two singular values multiply to det = 1.
    """
    _check_unimodular(M, det_tol)
    scale = math.exp(2.0 * M.log_scale)
    s = (M.a * M.a + M.b * M.b + M.c * M.c + M.d * M.d) * scale
    s = max(s, 2.0)
    mu1_sq = 0.5 * (s + math.sqrt(s * s - 4.0))
    return math.sqrt(mu1_sq)


@dataclass(frozen=True)
class AngleBoundCertificate:
    """Certified two-sided angle-distortion factors of a unimodular matrix.

    For unit vectors u, v with angle t in (0, pi], the images Mu, Mv have
    angle t' with ``m_lower * t <= t' <= m_upper * t``. The factors are
    certified bounds, not claimed tight.
    """

    mu1: float
    m_lower: float
    m_upper: float

    def __post_init__(self) -> None:
        if not self.mu1 >= 1.0:
            raise ValueError(f"mu1 must be >= 1, got {self.mu1}")
        if not (self.m_lower <= 1.0 <= self.m_upper):
            raise ValueError("bounds must bracket 1")

    def admits(self, theta: float, theta_image: float) -> bool:
        return self.m_lower * theta <= theta_image <= self.m_upper * theta


def angle_distortion_bounds(M: TransferMatrix, det_tol: float = DET_TOL) -> AngleBoundCertificate:
    """Angle-distortion certificate with factors 1/(16 mu1^2) and 16 mu1^2."""
    mu1 = largest_singular_value(M, det_tol=det_tol)
    factor = 16.0 * mu1 * mu1
    return AngleBoundCertificate(mu1=mu1, m_lower=1.0 / factor, m_upper=factor)


def angle_between(u: Sequence[float], v: Sequence[float]) -> float:
    """Angle between two nonzero vectors, in [0, pi]."""
    ux, uy = u
    vx, vy = v
    cross = ux * vy - uy * vx
    dot = ux * vx + uy * vy
    if cross == 0.0 and dot == 0.0:
        raise ValueError("angle_between requires nonzero vectors")
    return math.atan2(abs(cross), dot)
