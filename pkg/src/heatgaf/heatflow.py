"""The operator exp(-tau D^2 / 2) on polynomials, the closed class, and Weyl series."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, SingularFlowError
from .funcs import ComplexPoly, ExpQuadPoly, ExpQuadSum, TaylorFunction

TAIL_REL = 1e-18


@dataclass(frozen=True)
class HeatDomain:
    """Admissible flow times |tau| < safety / (2 sigma0)."""

    sigma0: float
    safety: float = 0.95

    @property
    def tau_max(self) -> float:
        return math.inf if self.sigma0 <= 0 else 1.0 / (2.0 * self.sigma0)

    @property
    def radius(self) -> float:
        return self.safety * self.tau_max

    def admits(self, tau) -> bool:
        return abs(tau) < self.radius

    def check(self, tau) -> None:
        if not self.admits(tau):
            raise DomainError(
                f"|tau| = {abs(tau):.6g} outside admissible radius {self.radius:.6g} "
                f"(type estimate {self.sigma0:.6g})",
                radius=self.radius,
                sigma=self.sigma0,
            )


def _log_step(tau: complex) -> tuple[float, complex]:
    """log|-tau/2| and the unit phase of -tau/2."""
    tau = complex(tau)
    r = abs(tau)  # -tau/2 itself underflows for subnormal tau
    return math.log(r) - math.log(2), -tau / r


def heat_poly(p: ComplexPoly, tau: complex) -> ComplexPoly:
    """Flow a polynomial exactly; the series in tau terminates."""
    tau = complex(tau)
    a = p.coeffs
    deg = len(a) - 1
    if tau == 0 or deg < 2:
        return p
    log_h, phase = _log_step(tau)
    out = a.copy()
    k = np.arange(deg + 1)
    for m in range(1, deg // 2 + 1):
        kk = k[: deg + 1 - 2 * m]
        logw = gammaln(kk + 2 * m + 1) - gammaln(kk + 1) - gammaln(m + 1) + m * log_h
        src = a[2 * m :]
        mag = np.abs(src)
        nz = mag > 0
        term = np.zeros_like(src)
        term[nz] = src[nz] / mag[nz] * np.exp(np.log(mag[nz]) + logw[nz])
        out[: deg + 1 - 2 * m] += term * phase**m
    return ComplexPoly(out)


@lru_cache(maxsize=8)
def _weyl_log_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Log weights 0.5 log((k+2m)!/k!) - log m! on the grid (k, j = k + 2m), and m."""
    k = np.arange(n + 1)[:, None]
    j = np.arange(n + 1)[None, :]
    m2 = j - k
    valid = (m2 >= 0) & (m2 % 2 == 0)
    m = np.where(valid, m2 // 2, 0)
    logw = 0.5 * (gammaln(j + 1) - gammaln(k + 1)) - gammaln(m + 1)
    logw = np.where(valid, logw, -np.inf)
    return logw, m


@lru_cache(maxsize=64)
def heat_matrix(n: int, tau: complex) -> np.ndarray:
    """Matrix of the flow on Weyl coefficients 0..n (upper triangular, cached)."""
    tau = complex(tau)
    if tau == 0:
        return np.eye(n + 1, dtype=complex)
    logw, m = _weyl_log_table(n)
    log_h, phase = _log_step(tau)
    with np.errstate(invalid="ignore"):
        mat = np.exp(logw + m * log_h) * phase**m
    mat[~np.isfinite(logw)] = 0
    return mat


def heat_weyl(c: np.ndarray, tau: complex) -> np.ndarray:
    """b_k = sum_m c_{k+2m} (-tau/2)^m sqrt((k+2m)!/k!) / m!  (finite in m)."""
    c = np.asarray(c, dtype=complex)
    tau = complex(tau)
    if tau == 0:
        return c.copy()
    return heat_matrix(len(c) - 1, tau) @ c


def flowed_type(sigma0: float, tau) -> float:
    """Upper bound sigma0 / (1 - 2 sigma0 |tau|) for the type after flowing."""
    if sigma0 <= 0:
        return 0.0
    return sigma0 / (1.0 - 2.0 * sigma0 * abs(tau))


def heat_taylor(F: TaylorFunction, tau: complex, domain: HeatDomain | None = None) -> TaylorFunction:
    """Flow a Weyl series termwise; the result is the exact flow of the truncation."""
    domain = HeatDomain(F.est_type) if domain is None else domain
    domain.check(tau)
    b = heat_weyl(F.weyl_coeffs, tau)
    return TaylorFunction(b, F.n_max, F.est_order, flowed_type(F.est_type, tau))


def flow_log(quad: complex, tau: complex, ref: complex | None = None) -> complex:
    """log(1 + quad*tau): principal value, or the branch nearest ``ref`` when given."""
    w = 1 + complex(quad) * complex(tau)
    if abs(w) < 1e-12:
        raise SingularFlowError(f"1 + quad*tau = {w} is singular")
    val = cmath.log(w)
    if ref is not None:
        turns = round((ref.imag - val.imag) / (2 * math.pi))
        val += 2j * math.pi * turns
    return val


def heat_expquadpoly(F: ExpQuadPoly, tau: complex, log_ref: complex | None = None) -> ExpQuadPoly:
    """Exact flow of exp(a z^2/2 + b z + c) p(z).

    ``log_ref`` continues the branch of log(1 + a tau) along a path in tau.
    """
    tau = complex(tau)
    a, b = F.quad, F.lin
    w = 1 + a * tau
    if abs(w) < 1e-12:
        raise SingularFlowError(f"1 + quad*tau = {w} is singular")
    if abs(a * tau) >= 1:
        raise DomainError(
            f"|quad*tau| = {abs(a * tau):.6g} must be < 1",
            radius=math.inf if a == 0 else 1 / abs(a),
            sigma=abs(a) / 2,
        )
    lg = flow_log(a, tau, log_ref)
    const = F.const - tau * b * b / (2 * w) - lg / 2
    inner = heat_poly(F.poly, tau / w)
    poly = inner.compose_affine(1 / w, -b * tau / w)
    return ExpQuadPoly(a / w, b / w, const, poly)


def heat_sum(F: ExpQuadSum, tau: complex) -> ExpQuadSum:
    return ExpQuadSum(tuple(heat_expquadpoly(t, tau) for t in F.terms))


def heat(F, tau, domain: HeatDomain | None = None):
    """Dispatch on the function representation."""
    if isinstance(F, ComplexPoly):
        return heat_poly(F, tau)
    if isinstance(F, ExpQuadPoly):
        return heat_expquadpoly(F, tau)
    if isinstance(F, ExpQuadSum):
        return heat_sum(F, tau)
    if isinstance(F, TaylorFunction):
        return heat_taylor(F, tau, domain)
    raise TypeError(f"cannot flow {type(F).__name__}")


def admissible_radius(F) -> float:
    """Largest |tau| the representation of F is flowed to without a domain error."""
    if isinstance(F, ComplexPoly):
        return math.inf
    if isinstance(F, ExpQuadPoly):
        return math.inf if F.quad == 0 else 1 / abs(F.quad)
    if isinstance(F, ExpQuadSum):
        return min(admissible_radius(t) for t in F.terms)
    if isinstance(F, TaylorFunction):
        return HeatDomain(F.est_type).radius
    raise TypeError(f"unknown representation {type(F).__name__}")


def mehler_check(x, y, rho, n_terms: int):
    """Partial Mehler sum and its closed form; arrays broadcast."""
    x, y, rho = (np.asarray(v, dtype=complex) for v in (x, y, rho))
    x, y, rho = np.broadcast_arrays(x, y, rho)
    # normalized Hermite values h_n = He_n / sqrt(n!)
    hx_prev, hy_prev = np.ones_like(x), np.ones_like(y)
    hx, hy = x.copy(), y.copy()
    lhs = np.ones_like(x)
    power = np.ones_like(rho)
    for n in range(1, n_terms):
        power = power * rho
        lhs = lhs + power * hx * hy
        s = math.sqrt(n + 1)
        hx_prev, hx = hx, (x * hx - math.sqrt(n) * hx_prev) / s
        hy_prev, hy = hy, (y * hy - math.sqrt(n) * hy_prev) / s
    one = 1 - rho * rho
    rhs = np.exp(-(rho * rho * (x * x + y * y) - 2 * rho * x * y) / (2 * one)) / np.sqrt(one)
    if lhs.ndim == 0:
        return complex(lhs), complex(rhs)
    return lhs, rhs


def sinpisq_zero(n: int, sign: int, tau) -> complex:
    """Zero of the flowed sin(pi z^2) that starts at sign*sqrt(n)."""
    tau = complex(tau)
    if abs(tau) >= 1 / (2 * math.pi):
        raise DomainError(f"|tau| must be < 1/(2 pi), got {abs(tau):.6g}", radius=1 / (2 * math.pi))
    arg = (np.arctan(2 * math.pi * tau) / (2 * math.pi) + n) * (1 + 4 * math.pi**2 * tau * tau)
    return sign * cmath.sqrt(complex(arg))


def sinpisq_function() -> ExpQuadSum:
    """sin(pi z^2) written as two Gaussians."""
    half = 1 / 2j
    return ExpQuadSum((
        ExpQuadPoly(2j * math.pi, 0, 0, ComplexPoly([half])),
        ExpQuadPoly(-2j * math.pi, 0, 0, ComplexPoly([-half])),
    ))


def exp_sine_function(a1: complex) -> ExpQuadSum:
    """exp(a1 z) sin(pi z) as two exponentials."""
    half = 1 / 2j
    return ExpQuadSum((
        ExpQuadPoly(0, a1 + 1j * math.pi, 0, ComplexPoly([half])),
        ExpQuadPoly(0, a1 - 1j * math.pi, 0, ComplexPoly([-half])),
    ))


def exp_sine_zero(n: int, a1: complex, tau) -> complex:
    return n + complex(tau) * complex(a1)


def theta_eval(z, sigma: complex, tol: float = 1e-18, radius: float | None = None):
    """Direct evaluation of sum_n q^{n^2} e^{2 pi i n z} with q = e^{pi i sigma}."""
    z = np.asarray(z, dtype=complex)
    sigma = complex(sigma)
    if sigma.imag <= 0:
        raise DomainError("Im sigma must be positive")
    r = float(np.max(np.abs(z.imag))) if radius is None else radius
    out = np.ones_like(z)
    n = 1
    while True:
        log_mag = -math.pi * sigma.imag * n * n + 2 * math.pi * n * r
        q = cmath.exp(1j * math.pi * sigma * n * n)
        out = out + q * (np.exp(2j * math.pi * n * z) + np.exp(-2j * math.pi * n * z))
        if -math.pi * sigma.imag * n * n < math.log(tol) and log_mag < math.log(tol):
            break
        n += 1
    return out if out.ndim else complex(out)


def theta_coeffs(sigma: complex, n_max: int) -> TaylorFunction:
    """Weyl coefficients of theta(z; sigma) = sum_n q^{n^2} e^{2 pi i n z}.

    A summand n is dropped once |q|^{n^2} < 1e-18 and its largest contribution
    to any of the n_max + 1 coefficients is below 1e-18 of the largest coefficient.
    """
    sigma = complex(sigma)
    if sigma.imag <= 0:
        raise DomainError("Im sigma must be positive")
    k = np.arange(n_max + 1)
    half_lf = 0.5 * gammaln(k + 1)
    c = np.zeros(n_max + 1, dtype=complex)
    c[0] = 1.0
    log_peak = 0.0
    n = 1
    while True:
        # n and -n together: q^{n^2} (2 pi i n)^k (1 + (-1)^k) / sqrt(k!)
        log_term = -math.pi * sigma.imag * n * n + k * math.log(2 * math.pi * n) - half_lf
        phase = cmath.exp(1j * math.pi * sigma.real * n * n) * (1j) ** (k % 4)
        term = np.where(k % 2 == 0, 2 * phase * np.exp(log_term), 0)
        c += term
        log_peak = max(log_peak, float(np.max(np.log(np.abs(c) + 1e-300))))
        if (-math.pi * sigma.imag * n * n < math.log(TAIL_REL)
                and np.max(log_term) < log_peak + math.log(TAIL_REL)):
            break
        n += 1
    return TaylorFunction(c, n_max, 2.0, math.pi / sigma.imag)
