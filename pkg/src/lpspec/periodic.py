"""Band spectra and Lyapunov exponents of periodic sampling functions.

The discriminant (trace of the one-period transfer product) drives
everything: the spectrum is ``{E : |D(E)| <= 2}``, located either through
polynomial root isolation (small periods) or a sign scan with bisection
(large periods), and cross-checked by an independent Floquet eigenvalue
oracle.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .intervals import Interval, hausdorff_distance, merge_intervals, total_measure

_RENORM_LIMIT = 1e120
_LOG2 = math.log(2.0)

# Below this period the discriminant's polynomial coefficients stay well
# inside float range and companion-matrix rootfinding is reliable.
_POLY_PERIOD_LIMIT = 32


class SolverError(RuntimeError):
    """Band-edge isolation failed; carries the offending window."""

    def __init__(self, message: str, window: tuple[float, float] | None = None):
        super().__init__(message)
        self.window = window


class OracleError(RuntimeError):
    """Floquet eigenvalue oracle failed to converge."""


@dataclass(frozen=True)
class PeriodicSampler:
    """Real-valued function on Z/pZ; value at site k is ``values[k mod p]``."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise ValueError("sampler needs period >= 1")
        vals = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("sampler values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def period(self) -> int:
        return len(self.values)

    @property
    def norm(self) -> float:
        return max(abs(v) for v in self.values)

    def value_at(self, n: int) -> float:
        return self.values[n % self.period]

    def scaled(self, lam: float) -> "PeriodicSampler":
        return PeriodicSampler(tuple(lam * v for v in self.values))

    def shifted(self, c: float) -> "PeriodicSampler":
        return PeriodicSampler(tuple(v + c for v in self.values))

    def with_site_bump(self, site: int, amount: float) -> "PeriodicSampler":
        vals = list(self.values)
        vals[site % self.period] += amount
        return PeriodicSampler(tuple(vals))

    def promoted(self, target_period: int) -> "PeriodicSampler":
        """Reinterpret at a multiple of the current period."""
        if target_period % self.period != 0:
            raise ValueError(f"{target_period} is not a multiple of period {self.period}")
        reps = target_period // self.period
        return PeriodicSampler(self.values * reps)

    def cyclic_shift(self, m: int) -> "PeriodicSampler":
        p = self.period
        m %= p
        return PeriodicSampler(self.values[m:] + self.values[:m])

    def sup_distance(self, other: "PeriodicSampler") -> float:
        p = math.lcm(self.period, other.period)
        return max(
            abs(self.value_at(k) - other.value_at(k)) for k in range(p)
        )


def constant_sampler(value: float, period: int = 1) -> PeriodicSampler:
    return PeriodicSampler((float(value),) * period)


@dataclass(frozen=True)
class BandSpectrum:
    """Ordered disjoint closed bands of a periodic operator's spectrum."""

    bands: tuple[Interval, ...]
    period: int
    touching: tuple[int, ...] = ()  # indices of bands merged across a closed gap
    resolved: bool = True  # False when bands exist below solver resolution

    def __post_init__(self) -> None:
        for (a, b) in self.bands:
            if b < a:
                raise ValueError(f"band with negative length ({a}, {b})")
        for (_, b1), (a2, _) in zip(self.bands, self.bands[1:]):
            if a2 < b1:
                raise ValueError("band interiors must be disjoint and sorted")
        if len(self.bands) > self.period:
            raise ValueError(f"{len(self.bands)} bands exceed period {self.period}")

    @property
    def total_measure(self) -> float:
        return total_measure(self.bands)

    @property
    def max_band_length(self) -> float:
        return max((b - a for a, b in self.bands), default=0.0)

    def gaps(self) -> list[Interval]:
        return [(b1, a2) for (_, b1), (a2, _) in zip(self.bands, self.bands[1:])]

    def min_gap_length(self) -> float:
        gs = self.gaps()
        return min((b - a for a, b in gs), default=float("inf"))

    def to_json(self) -> str:
        return json.dumps(
            {
                "period": self.period,
                "bands": [[a, b] for a, b in self.bands],
                "touching": list(self.touching),
                "resolved": self.resolved,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "BandSpectrum":
        doc = json.loads(text)
        return cls(
            bands=tuple((float(a), float(b)) for a, b in doc["bands"]),
            period=int(doc["period"]),
            touching=tuple(int(i) for i in doc.get("touching", [])),
            resolved=bool(doc.get("resolved", True)),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["band_index", "left", "right"])
        for i, (a, b) in enumerate(self.bands):
            writer.writerow([i, repr(a), repr(b)])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# transfer chains over energy grids


def _chain(E, values: Sequence[float], lam: float = 1.0, n: int | None = None, offset: int = 0):
    """Renormalized transfer product over an energy array.

    Returns (a, b, c, d, log_scale) arrays for the product of ``n`` step
    matrices starting at site ``offset``.
    """
    E = np.asarray(E, dtype=float)
    p = len(values)
    if n is None:
        n = p
    a = np.ones_like(E)
    b = np.zeros_like(E)
    c = np.zeros_like(E)
    d = np.ones_like(E)
    ls = np.zeros_like(E)
    for k in range(offset, offset + n):
        s = E - lam * values[k % p]
        a, b, c, d = s * a - c, s * b - d, a, b
        m = np.abs(a)
        np.maximum(m, np.abs(b), out=m)
        np.maximum(m, np.abs(c), out=m)
        np.maximum(m, np.abs(d), out=m)
        if (m > _RENORM_LIMIT).any():
            scale = np.where(m > _RENORM_LIMIT, m, 1.0)
            a = a / scale
            b = b / scale
            c = c / scale
            d = d / scale
            ls = ls + np.log(scale)
    return a, b, c, d, ls


def _renorm(a, b, c, d, ls):
    m = np.abs(a)
    np.maximum(m, np.abs(b), out=m)
    np.maximum(m, np.abs(c), out=m)
    np.maximum(m, np.abs(d), out=m)
    big = m > _RENORM_LIMIT
    if big.any():
        scale = np.where(big, m, 1.0)
        a, b, c, d = a / scale, b / scale, c / scale, d / scale
        ls = ls + np.where(big, np.log(scale), 0.0)
    return a, b, c, d, ls


def _mul(x, y):
    """Chain product x @ y with renormalization (x applied after y)."""
    xa, xb, xc, xd, xls = x
    ya, yb, yc, yd, yls = y
    return _renorm(
        xa * ya + xb * yc,
        xa * yb + xb * yd,
        xc * ya + xd * yc,
        xc * yb + xd * yd,
        xls + yls,
    )


def _power(x, k: int):
    """k-th power of a chain tuple by repeated squaring."""
    if k < 0:
        raise ValueError("nonnegative powers only")
    a = x[0]
    acc = (np.ones_like(a), np.zeros_like(a), np.zeros_like(a), np.ones_like(a), np.zeros_like(a))
    base = x
    while k:
        if k & 1:
            acc = _mul(base, acc)
        k >>= 1
        if k:
            base = _mul(base, base)
    return acc


class BlockChain:
    """Monodromy evaluator for run-length-encoded periodic samplers.

    ``segments`` is a list of (values, repeat) pairs: the full period is
    the concatenation of each value block repeated that many times.
    Powers of the per-block transfer products are taken by repeated
    squaring, so one evaluation costs O(sum len(values) + log(repeats))
    matrix products instead of O(period).
    """

    def __init__(self, segments: Sequence[tuple[Sequence[float], int]], lam: float = 1.0):
        self.segments = [(tuple(float(v) for v in vals), int(rep)) for vals, rep in segments]
        if not self.segments:
            raise ValueError("at least one segment required")
        for vals, rep in self.segments:
            if rep < 1 or len(vals) < 1:
                raise ValueError("segments need nonempty values and repeat >= 1")
        self.lam = float(lam)
        self.period = sum(len(vals) * rep for vals, rep in self.segments)
        flat = [v for vals, _ in self.segments for v in vals]
        self.scaled_lo = min(lam * v for v in flat)
        self.scaled_hi = max(lam * v for v in flat)

    def __call__(self, E):
        E = np.asarray(E, dtype=float)
        acc = None
        for vals, rep in self.segments:
            block = _chain(E, vals, self.lam)
            powered = _power(block, rep) if rep > 1 else block
            acc = powered if acc is None else _mul(powered, acc)
        return acc

    def sampler(self) -> "PeriodicSampler":
        """Materialize the flat (unscaled) sampler."""
        flat: list[float] = []
        for vals, rep in self.segments:
            flat.extend(vals * rep)
        return PeriodicSampler(tuple(flat))


def _log_abs_disc(E, values: Sequence[float], lam: float = 1.0, chain=None):
    """log |D(E)| on an energy array, overflow-safe."""
    if chain is not None:
        a, _, _, d, ls = chain(E)
    else:
        a, _, _, d, ls = _chain(E, values, lam)
    t = np.abs(a + d)
    with np.errstate(divide="ignore"):
        return np.where(t > 0.0, np.log(np.maximum(t, 1e-320)) + ls, -np.inf)


def discriminant(E: float, f: PeriodicSampler, lam: float = 1.0) -> float:
    """Trace of the one-period transfer product (monic degree-p polynomial in E)."""
    a, _, _, d, ls = _chain(np.asarray([float(E)]), f.values, lam)
    return float((a[0] + d[0]) * math.exp(ls[0]))


def _log_spectral_radius_arrays(a, b, c, d, ls):
    """Vectorized log spectral radius for unimodular chain results."""
    t = np.abs(a + d)
    with np.errstate(divide="ignore"):
        log_tr = np.where(t > 0.0, np.log(np.maximum(t, 1e-320)) + ls, -np.inf)
    inside = log_tr <= _LOG2
    x = np.where(inside, 1.0, 4.0 * np.exp(-2.0 * np.clip(ls, -300, 300)) / np.maximum(t, 1e-320) ** 2)
    x = np.clip(x, 0.0, 1.0)
    out = log_tr + np.log1p(np.sqrt(1.0 - x)) - _LOG2
    return np.where(inside, 0.0, out)


def lyapunov_periodic(E: float, f: PeriodicSampler, lam: float = 1.0) -> float:
    """(1/p) log of the monodromy spectral radius; zero exactly on the spectrum."""
    return float(lyapunov_grid(np.asarray([float(E)]), f, lam)[0])


def lyapunov_grid(E, f: PeriodicSampler, lam: float = 1.0):
    """Vectorized ``lyapunov_periodic`` over an energy array."""
    arrays = _chain(np.asarray(E, dtype=float), f.values, lam)
    return _log_spectral_radius_arrays(*arrays) / f.period


def lyapunov_chain_grid(E, chain: "BlockChain"):
    """Lyapunov exponent over a grid from a block-structured monodromy."""
    return _log_spectral_radius_arrays(*chain(np.asarray(E, dtype=float))) / chain.period


def family_lyapunov(E: float, lam: float, family: Sequence[PeriodicSampler]) -> float:
    """Arithmetic mean of member Lyapunov exponents (multiplicities respected)."""
    if len(family) == 0:
        raise ValueError("family must be nonempty")
    return float(family_lyapunov_grid(np.asarray([float(E)]), lam, family)[0])


def family_lyapunov_grid(E, lam: float, family: Sequence[PeriodicSampler]):
    if len(family) == 0:
        raise ValueError("family must be nonempty")
    E = np.asarray(E, dtype=float)
    acc = np.zeros_like(E)
    for f in family:
        acc += lyapunov_grid(E, f, lam)
    return acc / len(family)


# ---------------------------------------------------------------------------
# band location


def _disc_poly_coeffs(values: Sequence[float], lam: float, center: float = 0.0) -> np.ndarray:
    """Coefficients (highest degree first) of D as a polynomial in E - center.

    Centering near the potential mean keeps companion-matrix roots well
    conditioned even when a constant shift pushes the spectrum far out.
    """
    one = np.array([1.0])
    a, b, c, d = one.copy(), np.array([0.0]), np.array([0.0]), one.copy()
    for v in values:
        step = np.array([1.0, center - lam * v])  # (E - center) + center - lam*v
        new_a = np.polyadd(np.polymul(step, a), -c)
        new_b = np.polyadd(np.polymul(step, b), -d)
        a, b, c, d = new_a, new_b, a, b
    return np.polyadd(a, d)


def _real_roots(coeffs: np.ndarray, window: tuple[float, float]) -> list[float]:
    # near-double roots (almost-closed gaps) carry O(sqrt(eps)) imaginary
    # parts; keep them as candidates and let the sign assembly decide.
    roots = np.roots(coeffs)
    scale = max(1.0, float(np.max(np.abs(roots))) if len(roots) else 1.0)
    out = []
    for r in roots:
        if abs(r.imag) <= 1e-5 * scale:
            x = float(r.real)
            if window[0] <= x <= window[1]:
                out.append(x)
    return sorted(out)


def _bisect_edges(lo, hi, values, lam, tol, chain=None):
    """Vectorized bisection of sign changes of log|D| - log 2."""
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    g_lo = _log_abs_disc(lo, values, lam, chain) - _LOG2
    steps = max(1, int(math.ceil(math.log2(max(1e-300, float(np.max(hi - lo)) / tol)))))
    for _ in range(min(steps, 80)):
        mid = 0.5 * (lo + hi)
        g_mid = _log_abs_disc(mid, values, lam, chain) - _LOG2
        go_right = (g_lo <= 0) == (g_mid <= 0)
        lo = np.where(go_right, mid, lo)
        g_lo = np.where(go_right, g_mid, g_lo)
        hi = np.where(go_right, hi, mid)
    return 0.5 * (lo + hi)


def _assemble_bands(edges: list[float], window, values, lam, tol, chain=None):
    """Build bands from candidate edge positions via midpoint signs."""
    pts = [window[0]] + sorted(edges) + [window[1]]
    mids = np.array([(x + y) / 2.0 for x, y in zip(pts, pts[1:])])
    if len(mids) == 0:
        return []
    g = _log_abs_disc(mids, values, lam, chain) - _LOG2
    bands = []
    for i, inside in enumerate(g <= 0.0):
        if inside:
            a, b = pts[i], pts[i + 1]
            bands.append((a, b))
    # merge bands separated by less than the solver resolution
    return merge_intervals(bands, gap_tol=tol)


def band_spectrum(
    f: PeriodicSampler | None,
    tol: float = 1e-10,
    lam: float = 1.0,
    grid_factor: int = 64,
    max_refine: int = 3,
    chain: BlockChain | None = None,
) -> BandSpectrum:
    """Locate ``{E : |D(E)| <= 2}`` as at most p disjoint closed bands.

    Small periods go through polynomial root isolation of D -+ 2 (catches
    arbitrarily thin bands); larger periods use a sign scan on a grid of
    ``grid_factor * p`` points, refined adaptively x4 up to ``max_refine``
    times. Edges are bisected to within ``tol``. Closed (touching) gaps
    are merged into one band and flagged. A ``chain`` evaluator replaces
    the site-by-site product for run-length-structured samplers.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    pad = 1e-6 + 10.0 * tol
    if chain is not None:
        values: tuple[float, ...] = ()
        p = chain.period
        window = (chain.scaled_lo - 2.0 - pad, chain.scaled_hi + 2.0 + pad)
        use_poly = False
    else:
        if f is None:
            raise ValueError("either a sampler or a chain is required")
        values = f.values
        p = f.period
        scaled = [lam * v for v in values]
        window = (min(scaled) - 2.0 - pad, max(scaled) + 2.0 + pad)
        use_poly = p <= _POLY_PERIOD_LIMIT

    edges: list[float] = []
    tangencies: list[float] = []
    if use_poly:
        center = 0.5 * (window[0] + window[1])
        coeffs = _disc_poly_coeffs(values, lam, center=center)
        x_window = (window[0] - center, window[1] - center)
        for shift in (-2.0, 2.0):
            shifted = coeffs.copy()
            shifted[-1] += shift  # roots of D - (+-2) ... D + shift = 0 means D = -shift
            edges.extend(x + center for x in _real_roots(shifted, x_window))
        if not edges:
            raise SolverError("no spectral edges found for a small period", window)
        # polish every edge inside a +-h bracket when a sign change exists;
        # candidates without a bracket where |D| still reaches 2 are
        # tangencies (closed gaps)
        e = np.array(sorted(edges))
        h = np.maximum(1e-6, 1e-9 * np.abs(e))
        lo, hi = e - h, e + h
        g_lo = _log_abs_disc(lo, values, lam) - _LOG2
        g_hi = _log_abs_disc(hi, values, lam) - _LOG2
        has_bracket = (g_lo <= 0) != (g_hi <= 0)
        g_at = _log_abs_disc(e, values, lam) - _LOG2
        tangencies = [
            float(x)
            for x, br, g in zip(e, has_bracket, g_at)
            if not br and abs(g) < 1e-6
        ]
        polished = _bisect_edges(lo, hi, values, lam, tol)
        e = np.where(has_bracket, polished, e)
        edges = list(e)
    else:
        for attempt in range(max_refine + 1):
            n_pts = grid_factor * p * 4**attempt + 1
            grid = np.linspace(window[0], window[1], n_pts)
            inside = np.zeros(n_pts, dtype=bool)
            chunk = 1 << 18
            for start in range(0, n_pts, chunk):
                seg = grid[start : start + chunk]
                inside[start : start + len(seg)] = (
                    _log_abs_disc(seg, values, lam, chain) - _LOG2 <= 0.0
                )
            flips = np.nonzero(inside[:-1] != inside[1:])[0]
            if len(flips) == 0:
                if inside.any():
                    raise SolverError(
                        "band structure unresolved at maximum refinement", window
                    )
                # no band thicker than the grid resolution: report unresolved-empty
                return BandSpectrum(bands=(), period=p, resolved=False)
            refined = _bisect_edges(grid[flips], grid[flips + 1], values, lam, tol, chain)
            edges = list(refined)
            n_bands_estimate = len(edges) // 2
            if n_bands_estimate <= p:
                break
        else:
            raise SolverError("more edges than bands allow after refinement", window)

    bands = _assemble_bands(edges, window, values, lam, tol, chain)
    if len(bands) > p:
        raise SolverError(f"found {len(bands)} bands for period {p}", window)
    if not bands:
        return BandSpectrum(bands=(), period=p, resolved=use_poly)

    # flag merged (touching) bands: a tangency point strictly inside
    touching = []
    for i, (a, b) in enumerate(bands):
        if any(a + tol < t < b - tol for t in tangencies):
            touching.append(i)
    return BandSpectrum(bands=tuple(bands), period=p, touching=tuple(touching))


def floquet_oracle(f: PeriodicSampler, theta_count: int, lam: float = 1.0) -> BandSpectrum:
    """Independent band locator via Floquet eigenvalues.

    For each boundary phase on a uniform grid over [0, pi] the p x p
    periodic Jacobi matrix is diagonalized; band j is the range of the
    j-th sorted eigenvalue. Band edges sit exactly at the phases 0 and
    pi, which the grid always contains.
    """
    if theta_count < 2:
        raise ValueError("theta_count must be >= 2")
    p = f.period
    thetas = np.linspace(0.0, math.pi, theta_count)
    if p == 1:
        eigs = (lam * f.values[0] + 2.0 * np.cos(thetas))[:, None]
    else:
        H = np.zeros((theta_count, p, p), dtype=complex)
        idx = np.arange(p)
        H[:, idx, idx] = lam * np.asarray(f.values)
        off = np.arange(p - 1)
        H[:, off, off + 1] = 1.0
        H[:, off + 1, off] = 1.0
        phase = np.exp(-1j * thetas)
        H[:, 0, p - 1] += phase
        H[:, p - 1, 0] += np.conj(phase)
        try:
            eigs = np.linalg.eigvalsh(H)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise OracleError(f"eigenvalue solver failed: {exc}") from exc
    lo = eigs.min(axis=0)
    hi = eigs.max(axis=0)
    bands = merge_intervals(zip(lo, hi))
    return BandSpectrum(bands=tuple(bands), period=p)


# ---------------------------------------------------------------------------
# measure certificates


@dataclass(frozen=True)
class SpectralCertificate:
    """Transfer-norm growth constant C and the implied measure bound 4*pi*p/C."""

    C: float
    log_C: float
    k_used: int
    period: int
    lam: float
    bound: float
    witness_energy: float
    witness_log_norm: float
    measured_total: float
    passes: bool
    grid: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.C < 1.0:
            raise ValueError("growth constant must be >= 1")


def _log_operator_norm(a, b, c, d, ls):
    """Vectorized log of the largest singular value for det-1 chains."""
    sumsq = a * a + b * b + c * c + d * d
    log_s = np.log(np.maximum(sumsq, 2.0)) + 2.0 * ls
    # sigma1^2 = (s + sqrt(s^2 - 4)) / 2 ; for large s this is ~ s
    ratio = np.clip(4.0 * np.exp(-2.0 * np.clip(log_s, -600, 600)), 0.0, 1.0)
    return 0.5 * (log_s + np.log1p(np.sqrt(1.0 - ratio)) - _LOG2)


def transfer_log_norm_grid(E, f: PeriodicSampler, lam: float, n: int, offset: int = 0):
    """log of the operator norm of the n-step transfer product on a grid."""
    arrays = _chain(np.asarray(E, dtype=float), f.values, lam, n=n, offset=offset)
    return _log_operator_norm(*arrays)


def chain_log_norm_grid(E, chain: BlockChain):
    """log operator norm of a block-structured product on a grid."""
    return _log_operator_norm(*chain(np.asarray(E, dtype=float)))


def measure_certificate(
    f: PeriodicSampler,
    lam: float,
    E_grid,
    k: int,
    offsets: Sequence[int] | None = None,
    spectrum: BandSpectrum | None = None,
) -> SpectralCertificate:
    """Certify |spectrum| <= 4*pi*p / C from transfer-norm growth.

    C is the min over grid energies of the max over offsets of the k-step
    transfer norm; both k and 2k are tried and the better constant kept.
    Restricting ``offsets`` only weakens C, so the bound stays valid.
    """
    if k < 1:
        raise ValueError("block length k must be >= 1")
    E_grid = np.asarray(E_grid, dtype=float)
    p = f.period
    if offsets is None:
        offsets = range(p)
    best_log_C = -np.inf
    best_k = k
    best_profile = None
    for k_try in (k, 2 * k):
        log_norm = np.full(E_grid.shape, -np.inf)
        for off in offsets:
            log_norm = np.maximum(
                log_norm, transfer_log_norm_grid(E_grid, f, lam, n=k_try, offset=off)
            )
        log_C_try = float(np.min(log_norm))
        if log_C_try > best_log_C:
            best_log_C = log_C_try
            best_k = k_try
            best_profile = log_norm
    log_C = max(best_log_C, 0.0)
    C = math.exp(log_C) if log_C < 700 else float("inf")
    bound = 4.0 * math.pi * p * math.exp(-log_C)
    if spectrum is None:
        spectrum = band_spectrum(f, lam=lam)
    measured = spectrum.total_measure
    witness_idx = int(np.argmin(best_profile))
    return SpectralCertificate(
        C=C,
        log_C=log_C,
        k_used=best_k,
        period=p,
        lam=lam,
        bound=bound,
        witness_energy=float(E_grid[witness_idx]),
        witness_log_norm=float(best_profile[witness_idx]),
        measured_total=measured,
        passes=bool(measured <= bound + 1e-12),
        grid={"lo": float(E_grid[0]), "hi": float(E_grid[-1]), "n": int(E_grid.size)},
    )


def spectra_hausdorff(first: BandSpectrum, second: BandSpectrum) -> float:
    return hausdorff_distance(first.bands, second.bands)
