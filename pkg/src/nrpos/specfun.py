"""Closed-form band-limited sinc-kernel integrals and their quadrature twins.

The ranging variance needs two families of integrals over the receiver
front-end band [-W, W]:

  * ``spectral_moment``:      int f^2 sinc^2((f - c) T) df
  * ``cross_spectral_moment``: int f^2 sinc^2((f - a) Ta) sinc^2((f - b) Tb) df

with sinc(x) = sin(pi x)/(pi x).  Both are evaluated in closed form through
sine/cosine integrals plus partial fractions, and independently by adaptive
panel quadrature split at the sinc zeros (``*_quad``).  The quadrature side is
the ground truth the closed forms are certified against; the two sides share
no computational code.

Closed-form assembly notes.  Expanding sin^2 products into cosines leaves
integrals of cos(a x + b)/(x - c)^k whose poles sit inside the band for real
subcarriers.  Each such primitive is assigned its symmetric principal-value /
finite-part value (the log-singular pieces enter through the even, convergent
cosine integral ``cin``); the divergent parts cancel identically across the
five cosine terms because the assembled integrand is bounded, so the summed
closed form equals the proper integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import sici

from .errors import NumericalError
from .numerology import NumerologyConfig

_EULER_GAMMA = np.euler_gamma
_EQUAL_POLE_RTOL = 1e-9
_EDGE_RTOL = 1e-12

# int_{y1}^{y2} of odd/divergent kernels is taken in the symmetric PV sense;
# these are exact antiderivative identities away from the pole.


def si(x):
    """Sine integral, odd, -> pi/2 as x -> +inf."""
    return sici(np.asarray(x, dtype=float))[0] if np.ndim(x) else float(sici(float(x))[0])


def cin(x):
    """Convergent cosine integral int_0^x (1 - cos t)/t dt; even, cin(0) = 0.

    Small arguments use the alternating series to dodge the gamma + log
    cancellation; larger ones the standard identity with the cosine integral.
    """
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(ax)
    small = ax < 0.5
    if np.any(small):
        xs = ax[small]
        acc = np.zeros_like(xs)
        for k in range(1, 10):
            acc += (-1.0) ** (k + 1) * xs ** (2 * k) / (2 * k * math.factorial(2 * k))
        out[small] = acc
    if np.any(~small):
        xl = ax[~small]
        out[~small] = _EULER_GAMMA + np.log(xl) - sici(xl)[1]
    return out if np.ndim(x) else float(out)


# ---------------------------------------------------------------------------
# Oscillatory pole primitives
# ---------------------------------------------------------------------------


def _pv_cos_over_y(a, y1, y2):
    # PV int_{y1}^{y2} cos(a y)/y dy, valid whether or not 0 lies inside.
    return np.log(np.abs(y2 / y1)) + cin(a * y1) - cin(a * y2)


def _int_sin_over_y(a, y1, y2):
    return si(a * y2) - si(a * y1)


def _pole_integrals(halfband, a, b, c):
    """Finite-part values of int_{-W}^{W} {sin,cos}(a x + b)/(x - c)^k dx.

    Returns (e0, e1, e2, e3, e4): e0 is the sin/(x-c) integral, e1..e4 the
    cos/(x-c)^k integrals for k = 1..4.  All arguments broadcast.
    """
    y1 = -halfband - c
    y2 = halfband - c
    beta = a * c + b
    pv = _pv_cos_over_y(a, y1, y2)
    ss = _int_sin_over_y(a, y1, y2)
    sb, cb = np.sin(beta), np.cos(beta)
    e0 = sb * pv + cb * ss
    e1 = cb * pv - sb * ss
    u2 = a * halfband + b
    u1 = -a * halfband + b
    c2, c1 = np.cos(u2), np.cos(u1)
    s2, s1 = np.sin(u2), np.sin(u1)
    e2 = (-c2 / y2 + c1 / y1) - a * e0
    e3 = (-c2 / (2 * y2**2) + c1 / (2 * y1**2)) + a * (s2 / (2 * y2) - s1 / (2 * y1)) - (a**2 / 2) * e1
    e4 = (
        (-c2 / (3 * y2**3) + c1 / (3 * y1**3))
        + a * (s2 / (6 * y2**2) - s1 / (6 * y1**2))
        + a**2 * (c2 / (6 * y2) - c1 / (6 * y1))
        + (a**3 / 6) * e0
    )
    return e0, e1, e2, e3, e4


def oscillatory_pole_integral(kind: int, halfband: float, a: float, b: float, c: float) -> float:
    """Proper value of one pole primitive when the pole lies outside the band.

    kind 0: int sin(ax+b)/(x-c) dx; kind k in 1..4: int cos(ax+b)/(x-c)^k dx.
    Poles on or inside [-halfband, halfband] are rejected here; in-band poles
    are only meaningful inside the assembled, cancellation-safe moments.
    """
    if not 0 <= kind <= 4:
        raise ValueError(f"kind must be in 0..4, got {kind}")
    if abs(c) <= halfband:
        raise ValueError(
            f"pole {c:g} lies on or inside [-{halfband:g}, {halfband:g}]; "
            "use the assembled moment forms for in-band poles"
        )
    vals = _pole_integrals(halfband, float(a), float(b), float(c))
    return float(vals[kind])


# ---------------------------------------------------------------------------
# Partial fractions for f^2 / ((f-a)^2 (f-b)^2)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartialFractionCoeffs:
    """Expansion of f^2 / ((f-a)^2 (f-b)^2) over simple pole terms.

    distinct: d0/(f-a) + d1/(f-a)^2 + d2/(f-b) + d3/(f-b)^2
    equal:    d4/(f-a)^2 + d5/(f-a)^3 + d6/(f-a)^4
    """

    case_tag: str
    coeffs: tuple[float, ...]


def partial_fractions(center_a: float, center_b: float) -> PartialFractionCoeffs:
    a, b = float(center_a), float(center_b)
    if abs(a - b) < _EQUAL_POLE_RTOL * max(abs(a), abs(b), 1.0):
        return PartialFractionCoeffs("equal", (1.0, 2.0 * a, a * a))
    d = a - b
    d0 = -2.0 * a * b / d**3
    d1 = a * a / d**2
    d3 = b * b / d**2
    return PartialFractionCoeffs("distinct", (d0, d1, -d0, d3))


# ---------------------------------------------------------------------------
# Self moment: int f^2 sinc^2((f - c) T) df over [-W, W]
# ---------------------------------------------------------------------------


def _check_edges(halfband: float, *centers: float) -> None:
    for c in centers:
        if abs(abs(c) - halfband) <= _EDGE_RTOL * max(abs(c), halfband):
            raise NumericalError(
                f"kernel center {c:g} sits on the band edge +/-{halfband:g}"
            )


def spectral_moment_of_center(center_hz: float, symbol_s: float, halfband_hz: float) -> float:
    """Closed form of the second spectral moment of one sinc^2 kernel."""
    _check_edges(halfband_hz, center_hz)
    T = symbol_s
    q1 = (-halfband_hz - center_hz) * T
    q2 = (halfband_hz - center_hz) * T
    cT = center_hz * T
    b0 = (q2 - q1) / 2.0 - (np.sin(2 * np.pi * q2) - np.sin(2 * np.pi * q1)) / (4 * np.pi)
    b1 = cT * (cin(2 * np.pi * q2) - cin(2 * np.pi * q1))

    def sin2_over(q: float) -> float:
        if abs(q) < 1e-9:
            return np.pi**2 * q
        return np.sin(np.pi * q) ** 2 / q

    b2 = cT**2 * (np.pi * (si(2 * np.pi * q2) - si(2 * np.pi * q1)) - sin2_over(q2) + sin2_over(q1))
    return float((b0 + b1 + b2) / (T**3 * np.pi**2))


def spectral_moment(n: int, numerology: NumerologyConfig, halfband_hz: float) -> float:
    """Second spectral moment for centered subcarrier index ``n``."""
    return spectral_moment_of_center(n * numerology.scs_hz, numerology.symbol_s, halfband_hz)


def spectral_moment_vec(centers_hz: np.ndarray, symbol_s: float, halfband_hz: float) -> np.ndarray:
    """Vectorized ``spectral_moment_of_center`` over an array of centers."""
    c = np.asarray(centers_hz, dtype=float)
    if np.any(np.abs(np.abs(c) - halfband_hz) <= _EDGE_RTOL * np.maximum(np.abs(c), halfband_hz)):
        raise NumericalError(f"a kernel center sits on the band edge +/-{halfband_hz:g}")
    T = symbol_s
    q1 = (-halfband_hz - c) * T
    q2 = (halfband_hz - c) * T
    cT = c * T
    b0 = (q2 - q1) / 2.0 - (np.sin(2 * np.pi * q2) - np.sin(2 * np.pi * q1)) / (4 * np.pi)
    b1 = cT * (cin(2 * np.pi * q2) - cin(2 * np.pi * q1))

    def sin2_over(q):
        small = np.abs(q) < 1e-9
        safe = np.where(small, 1.0, q)
        return np.where(small, np.pi**2 * q, np.sin(np.pi * q) ** 2 / safe)

    b2 = cT**2 * (np.pi * (si(2 * np.pi * q2) - si(2 * np.pi * q1)) - sin2_over(q2) + sin2_over(q1))
    return (b0 + b1 + b2) / (T**3 * np.pi**2)


# ---------------------------------------------------------------------------
# Cross moment: int f^2 sinc^2((f-a) Ta) sinc^2((f-b) Tb) df over [-W, W]
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SincKernelPair:
    """Parameters of one cross moment: two kernel centers/periods and the band."""

    center_a: float
    center_b: float
    period_a: float
    period_b: float
    halfband: float

    def __post_init__(self) -> None:
        if self.period_a <= 0 or self.period_b <= 0 or self.halfband <= 0:
            raise ValueError("periods and halfband must be positive")


def _cos_terms(A, Ta, B, Tb):
    # sin^2(u) sin^2(v) = 1/4 - cos2u/4 - cos2v/4 + cos(2u-2v)/8 + cos(2u+2v)/8,
    # scaled by 4: weights of cos(a_z f + b_z) in the assembled numerator.
    return (
        (0.0, 0.0, 1.0),
        (2 * np.pi * (Ta - Tb), 2 * np.pi * (-A * Ta + B * Tb), 0.5),
        (2 * np.pi * (Ta + Tb), 2 * np.pi * (-A * Ta - B * Tb), 0.5),
        (2 * np.pi * Ta, -2 * np.pi * A * Ta, -1.0),
        (2 * np.pi * Tb, -2 * np.pi * B * Tb, -1.0),
    )


def cross_spectral_moment(params: SincKernelPair) -> float:
    """Closed form of the cross moment of two sinc^2 kernels."""
    A, B = params.center_a, params.center_b
    Ta, Tb = params.period_a, params.period_b
    hb = params.halfband
    _check_edges(hb, A, B)
    pf = partial_fractions(A, B)
    total = 0.0
    if pf.case_tag == "equal":
        d4, d5, d6 = pf.coeffs
        for a, b, w in _cos_terms(A, Ta, B, Tb):
            _, _, e2, e3, e4 = _pole_integrals(hb, a, b, A)
            total += w * (d4 * e2 + d5 * e3 + d6 * e4)
    else:
        d0, d1, d2, d3 = pf.coeffs
        for a, b, w in _cos_terms(A, Ta, B, Tb):
            _, e1a, e2a, _, _ = _pole_integrals(hb, a, b, A)
            _, e1b, e2b, _, _ = _pole_integrals(hb, a, b, B)
            total += w * (d0 * e1a + d1 * e2a + d2 * e1b + d3 * e2b)
    return float(total / (4 * np.pi**4 * Ta**2 * Tb**2))


def cross_spectral_moment_matrix(
    centers_a: np.ndarray,
    period_a: float,
    centers_b: np.ndarray,
    period_b: float,
    halfband: float,
) -> np.ndarray:
    """Vectorized cross moments for every (center_a, center_b) pair.

    Shape (len(centers_a), len(centers_b)).  Pairs with equal centers take the
    confluent partial-fraction branch; the others the distinct branch.
    """
    ca = np.asarray(centers_a, dtype=float)[:, None]
    cb = np.asarray(centers_b, dtype=float)[None, :]
    A = np.broadcast_to(ca, (ca.shape[0], cb.shape[1]))
    B = np.broadcast_to(cb, (ca.shape[0], cb.shape[1]))
    scale = np.maximum(np.maximum(np.abs(A), np.abs(B)), 1.0)
    equal = np.abs(A - B) < _EQUAL_POLE_RTOL * scale
    out = np.zeros(A.shape)

    Ta, Tb = period_a, period_b
    for a, b, w in _cos_terms(A, Ta, B, Tb):
        a = np.broadcast_to(a, A.shape) if np.ndim(a) else np.full(A.shape, a)
        b = np.broadcast_to(b, A.shape) if np.ndim(b) else np.full(A.shape, b)
        if np.any(~equal):
            d = np.where(equal, 1.0, A - B)  # placeholder 1.0 on the equal mask
            d0 = -2.0 * A * B / d**3
            d1 = A * A / d**2
            d3 = B * B / d**2
            _, e1a, e2a, _, _ = _pole_integrals(halfband, a, b, A)
            _, e1b, e2b, _, _ = _pole_integrals(halfband, a, b, B)
            out += np.where(equal, 0.0, w * (d0 * e1a + d1 * e2a - d0 * e1b + d3 * e2b))
        if np.any(equal):
            _, _, e2, e3, e4 = _pole_integrals(halfband, a, b, A)
            out += np.where(equal, w * (e2 + 2.0 * A * e3 + A * A * e4), 0.0)
    return out / (4 * np.pi**4 * Ta**2 * Tb**2)


# ---------------------------------------------------------------------------
# Quadrature twins (independent ground truth)
# ---------------------------------------------------------------------------


def _sinc_zero_breaks(centers_periods: list[tuple[float, float]], halfband: float) -> np.ndarray:
    pts = [np.array([-halfband, halfband])]
    for c, T in centers_periods:
        k_lo = int(np.ceil((-halfband - c) * T))
        k_hi = int(np.floor((halfband - c) * T))
        if k_hi >= k_lo:
            pts.append(c + np.arange(k_lo, k_hi + 1) / T)
    br = np.unique(np.concatenate(pts))
    return br[(br >= -halfband) & (br <= halfband)]


def _panel_gauss(f, breaks: np.ndarray, rtol: float) -> float:
    """Gauss-Legendre per panel with node-doubling convergence control."""
    lo, hi = breaks[:-1], breaks[1:]
    mid = (lo + hi) / 2.0
    half = (hi - lo) / 2.0

    def total(order: int) -> float:
        xn, wn = np.polynomial.legendre.leggauss(order)
        pts = mid[:, None] + half[:, None] * xn[None, :]
        return float(np.sum(half[:, None] * wn[None, :] * f(pts)))

    i1, i2 = total(16), total(24)
    scale = max(abs(i2), 1e-300)
    if abs(i2 - i1) > rtol * scale:
        i3 = total(40)
        if abs(i3 - i2) > rtol * max(abs(i3), 1e-300):
            achieved = abs(i3 - i2) / max(abs(i3), 1e-300)
            raise NumericalError(
                f"panel quadrature did not converge: achieved rtol {achieved:.2e} > {rtol:.0e}"
            )
        return i3
    return i2


def spectral_moment_quad(
    n: int, numerology: NumerologyConfig, halfband_hz: float, rtol: float = 1e-9
) -> float:
    """Quadrature evaluation of the self moment (oracle side)."""
    c, T = n * numerology.scs_hz, numerology.symbol_s
    breaks = _sinc_zero_breaks([(c, T)], halfband_hz)
    return _panel_gauss(lambda x: x**2 * np.sinc((x - c) * T) ** 2, breaks, rtol)


def spectral_moment_quad_of_center(
    center_hz: float, symbol_s: float, halfband_hz: float, rtol: float = 1e-9
) -> float:
    breaks = _sinc_zero_breaks([(center_hz, symbol_s)], halfband_hz)
    return _panel_gauss(lambda x: x**2 * np.sinc((x - center_hz) * symbol_s) ** 2, breaks, rtol)


def cross_spectral_moment_quad(params: SincKernelPair, rtol: float = 1e-9) -> float:
    """Quadrature evaluation of the cross moment (oracle side)."""
    A, B = params.center_a, params.center_b
    Ta, Tb = params.period_a, params.period_b
    breaks = _sinc_zero_breaks([(A, Ta), (B, Tb)], params.halfband)
    return _panel_gauss(
        lambda x: x**2 * np.sinc((x - A) * Ta) ** 2 * np.sinc((x - B) * Tb) ** 2,
        breaks,
        rtol,
    )
