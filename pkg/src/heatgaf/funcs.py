"""Polynomials, the exp-quadratic-times-polynomial class, and Weyl-basis series."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import gammaln

from .errors import DegenerateInputError, ExpOverflowError

EXP_CAP = 700.0


def _as_complex_array(values) -> np.ndarray:
    return np.atleast_1d(np.asarray(values, dtype=complex)).copy()


@dataclass(frozen=True)
class ComplexPoly:
    """Polynomial with complex coefficients stored in ascending degree."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _as_complex_array(self.coeffs)
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else c[:1] * 0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_roots(cls, roots, lead=1.0) -> "ComplexPoly":
        return cls(lead * P.polyfromroots(np.asarray(roots, dtype=complex)))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, z):
        return P.polyval(z, self.coeffs)

    def deriv(self, m: int = 1) -> "ComplexPoly":
        if m > self.degree:
            return ComplexPoly([0])
        return ComplexPoly(P.polyder(self.coeffs, m))

    def __add__(self, other: "ComplexPoly") -> "ComplexPoly":
        return ComplexPoly(P.polyadd(self.coeffs, other.coeffs))

    def __sub__(self, other: "ComplexPoly") -> "ComplexPoly":
        return ComplexPoly(P.polysub(self.coeffs, other.coeffs))

    def __mul__(self, other):
        if isinstance(other, ComplexPoly):
            return ComplexPoly(P.polymul(self.coeffs, other.coeffs))
        return ComplexPoly(self.coeffs * complex(other))

    __rmul__ = __mul__

    def compose_affine(self, alpha: complex, beta: complex) -> "ComplexPoly":
        """Return the polynomial z -> p(alpha*z + beta)."""
        out = np.zeros(1, dtype=complex)
        lin = np.array([beta, alpha], dtype=complex)
        for c in self.coeffs[::-1]:
            out = P.polymul(out, lin)
            out[0] += c
        return ComplexPoly(out)

    def scaled(self, lam: complex) -> "ComplexPoly":
        """Return z -> p(lam*z)."""
        return ComplexPoly(self.coeffs * complex(lam) ** np.arange(len(self.coeffs)))


def hermite_eval(n: int, x):
    """Probabilists' Hermite polynomial He_n(x) by the three-term recurrence."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    x = np.asarray(x, dtype=complex)
    prev, cur = np.ones_like(x), x.copy()
    if n == 0:
        return prev if prev.ndim else complex(prev)
    for k in range(1, n):
        prev, cur = cur, x * cur - k * prev
    return cur if cur.ndim else complex(cur)


def hermite_table(n_terms: int, x) -> np.ndarray:
    """He_0(x), ..., He_{n_terms-1}(x) stacked along the first axis."""
    x = np.asarray(x, dtype=complex)
    out = np.empty((n_terms,) + x.shape, dtype=complex)
    out[0] = 1.0
    if n_terms > 1:
        out[1] = x
    for k in range(1, n_terms - 1):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


@dataclass(frozen=True)
class ExpQuadPoly:
    """exp(quad*z**2/2 + lin*z + const) * poly(z)."""

    quad: complex = 0j
    lin: complex = 0j
    const: complex = 0j
    poly: ComplexPoly = field(default_factory=lambda: ComplexPoly([1]))

    def __post_init__(self):
        for name in ("quad", "lin", "const"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if not isinstance(self.poly, ComplexPoly):
            object.__setattr__(self, "poly", ComplexPoly(self.poly))

    def exponent(self, z):
        return self.quad * z * z / 2 + self.lin * z + self.const

    def __call__(self, z, cap: float = EXP_CAP):
        return eval_expquadpoly(self, z, cap)

    def deriv(self) -> "ExpQuadPoly":
        """Derivative, again in the closed class."""
        p = self.poly
        new = p.deriv() + ComplexPoly([self.lin, self.quad]) * p
        return ExpQuadPoly(self.quad, self.lin, self.const, new)

    def times_const(self, factor: complex) -> "ExpQuadPoly":
        return ExpQuadPoly(self.quad, self.lin, self.const, self.poly * factor)


def eval_expquadpoly(F: ExpQuadPoly, z, cap: float = EXP_CAP):
    """Evaluate F at z; raise instead of returning inf when the exponent is too large."""
    z = np.asarray(z, dtype=complex)
    e = F.exponent(z)
    worst = np.max(np.abs(e.real)) if e.size else 0.0
    if worst > cap:
        raise ExpOverflowError(f"exponent real part {worst:.1f} exceeds cap {cap}")
    out = np.exp(e) * F.poly(z)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class ExpQuadSum:
    """Finite sum of ExpQuadPoly terms, e.g. sin(pi z^2) as two Gaussians."""

    terms: tuple

    def __call__(self, z, cap: float = EXP_CAP):
        return sum(t(z, cap) for t in self.terms)

    def deriv(self) -> "ExpQuadSum":
        return ExpQuadSum(tuple(t.deriv() for t in self.terms))


def scale_argument(F: ExpQuadPoly, lam: complex) -> ExpQuadPoly:
    """G(z) = F(lam*z)."""
    lam = complex(lam)
    return ExpQuadPoly(F.quad * lam * lam, F.lin * lam, F.const, F.poly.scaled(lam))


def weyl_weights(n_max: int, z) -> np.ndarray:
    """z**n / sqrt(n!) for n = 0..n_max, built by a running product."""
    z = np.asarray(z, dtype=complex)
    steps = np.empty((n_max + 1,) + z.shape, dtype=complex)
    steps[0] = 1.0
    if n_max:
        roots = np.sqrt(np.arange(1, n_max + 1, dtype=float))
        steps[1:] = z[None, ...] / roots.reshape((-1,) + (1,) * z.ndim)
    return np.cumprod(steps, axis=0)


@dataclass(frozen=True)
class TaylorFunction:
    """Truncated series sum_n c_n z^n / sqrt(n!) with order/type estimates."""

    weyl_coeffs: np.ndarray
    n_max: int = -1
    est_order: float = 0.0
    est_type: float = 0.0

    def __post_init__(self):
        c = _as_complex_array(self.weyl_coeffs)
        c.setflags(write=False)
        object.__setattr__(self, "weyl_coeffs", c)
        object.__setattr__(self, "n_max", len(c) - 1)
        if self.est_order < 0 or self.est_type < 0:
            raise ValueError("order and type estimates must be nonnegative")

    @classmethod
    def from_weyl(cls, coeffs, order=None, type_=None) -> "TaylorFunction":
        """Build a series, estimating order and type unless both are given."""
        coeffs = _as_complex_array(coeffs)
        if order is None or type_ is None:
            try:
                order, type_ = estimate_order_type(cls(coeffs))
            except DegenerateInputError:
                order, type_ = 0.0, 0.0
        return cls(coeffs, len(coeffs) - 1, float(order), float(type_))

    @classmethod
    def from_poly(cls, p: ComplexPoly, n_max: int | None = None) -> "TaylorFunction":
        n_max = p.degree if n_max is None else n_max
        a = np.zeros(n_max + 1, dtype=complex)
        a[: p.degree + 1] = p.coeffs
        n = np.arange(n_max + 1)
        return cls(a * np.exp(0.5 * gammaln(n + 1)), n_max, 0.0, 0.0)

    def log_abs_taylor(self) -> np.ndarray:
        """log|a_n| with a_n = c_n/sqrt(n!); -inf where c_n == 0."""
        n = np.arange(self.n_max + 1)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.weyl_coeffs)) - 0.5 * gammaln(n + 1)

    def taylor_coeffs(self) -> np.ndarray:
        """Ordinary coefficients a_n (may underflow to 0 for very large n)."""
        n = np.arange(self.n_max + 1)
        return self.weyl_coeffs * np.exp(-0.5 * gammaln(n + 1))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        w = weyl_weights(self.n_max, z)
        out = np.tensordot(self.weyl_coeffs, w, axes=(0, 0))
        return out if out.ndim else complex(out)

    def deriv(self, m: int = 1) -> "TaylorFunction":
        """Exact derivative by shifting coefficients: c_n -> c_{n+1} sqrt(n+1)."""
        c = self.weyl_coeffs
        for _ in range(m):
            if len(c) <= 1:
                c = np.zeros(1, dtype=complex)
                break
            c = c[1:] * np.sqrt(np.arange(1, len(c)))
        return TaylorFunction(c, len(c) - 1, self.est_order, self.est_type)

    def __add__(self, other: "TaylorFunction") -> "TaylorFunction":
        n = max(self.n_max, other.n_max)
        c = np.zeros(n + 1, dtype=complex)
        c[: self.n_max + 1] += self.weyl_coeffs
        c[: other.n_max + 1] += other.weyl_coeffs
        return TaylorFunction(c, n, max(self.est_order, other.est_order), max(self.est_type, other.est_type))

    def scaled_by(self, factor: complex) -> "TaylorFunction":
        return TaylorFunction(self.weyl_coeffs * complex(factor), self.n_max, self.est_order, self.est_type)

    def times_z(self) -> "TaylorFunction":
        """Multiply by z: c_n z^n/sqrt(n!) -> sqrt(n+1) c_n z^(n+1)/sqrt((n+1)!)."""
        c = np.zeros(self.n_max + 2, dtype=complex)
        c[1:] = self.weyl_coeffs * np.sqrt(np.arange(1, self.n_max + 2))
        return TaylorFunction(c, self.n_max + 1, self.est_order, self.est_type)

    def rescaled(self, lam: complex) -> "TaylorFunction":
        """z -> F(lam z)."""
        c = self.weyl_coeffs * complex(lam) ** np.arange(self.n_max + 1)
        return TaylorFunction(c, self.n_max, self.est_order, self.est_type * abs(lam) ** 2)

    def truncate(self, n: int) -> "TaylorFunction":
        return TaylorFunction(self.weyl_coeffs[: n + 1], n, self.est_order, self.est_type)

    def to_poly(self) -> ComplexPoly:
        return ComplexPoly(self.taylor_coeffs())


@dataclass(frozen=True)
class ExpQuadTaylor:
    """exp(quad*z**2/2 + lin*z + const) times a Weyl series."""

    quad: complex
    lin: complex
    const: complex
    taylor: TaylorFunction

    def __call__(self, z, cap: float = EXP_CAP):
        z = np.asarray(z, dtype=complex)
        e = self.quad * z * z / 2 + self.lin * z + self.const
        if e.size and np.max(np.abs(e.real)) > cap:
            raise ExpOverflowError(f"exponent real part exceeds cap {cap}")
        out = np.exp(e) * self.taylor(z)
        return out if out.ndim else complex(out)

    def deriv(self) -> "ExpQuadTaylor":
        t = self.taylor
        inner = t.deriv() + t.scaled_by(self.lin) + t.times_z().scaled_by(self.quad)
        return ExpQuadTaylor(self.quad, self.lin, self.const, inner)


def weyl_product(g, h, n_out: int) -> np.ndarray:
    """Weyl coefficients of the product of two Weyl series, up to n_out.

    With e_k = z^k/sqrt(k!), e_i e_j = sqrt(C(i+j, i)) e_{i+j}.
    """
    g = np.asarray(g, dtype=complex)[: n_out + 1]
    h = np.asarray(h, dtype=complex)[: n_out + 1]
    out = np.zeros(n_out + 1, dtype=complex)
    lf = gammaln(np.arange(n_out + 1) + 1)
    j = np.arange(len(h))
    for i, gi in enumerate(g):
        if gi == 0:
            continue
        k = i + j
        keep = k <= n_out
        w = np.exp(0.5 * (lf[k[keep]] - lf[i] - lf[j[keep]]))
        out[k[keep]] += gi * w * h[keep]
    return out


def exp_linear_weyl(b: complex, n_out: int) -> np.ndarray:
    """Weyl coefficients of exp(b z): b^k / sqrt(k!)."""
    k = np.arange(n_out + 1)
    b = complex(b)
    if b == 0:
        out = np.zeros(n_out + 1, dtype=complex)
        out[0] = 1
        return out
    return np.exp(k * math.log(abs(b)) - 0.5 * gammaln(k + 1) + 1j * k * cmath.phase(b))


def estimate_order_type(F: TaylorFunction, min_points: int = 8) -> tuple[float, float]:
    """Order and type from the decay of log|a_n| over the window [n_max/2, n_max].

    Returns (0, 0) for a polynomial whose window is empty.  The order comes from
    a least-squares fit of log(1/|a_n|) against n log n, n and 1; the type then
    uses the largest n^(1/rho) |a_n|^(1/n) over the window.
    """
    if F.n_max < 32:
        raise DegenerateInputError("need n_max >= 32 to estimate order and type")
    loga = F.log_abs_taylor()
    lo = F.n_max // 2
    n = np.arange(lo, F.n_max + 1)
    y = -loga[lo:]
    usable = np.isfinite(y)
    if not usable.any():
        if np.any(F.weyl_coeffs):
            return 0.0, 0.0
        raise DegenerateInputError("all coefficients are zero")
    if usable.sum() < min_points:
        raise DegenerateInputError(
            f"only {int(usable.sum())} nonzero coefficients in window [{lo}, {F.n_max}]"
        )
    n, y = n[usable].astype(float), y[usable]
    design = np.stack([n * np.log(n), n, np.ones_like(n)], axis=1)
    inv_rho = np.linalg.lstsq(design, y, rcond=None)[0][0]
    if inv_rho <= 0:
        raise DegenerateInputError("coefficients do not decay; order is infinite")
    rho = 1.0 / inv_rho
    log_root = np.max(np.log(n) / rho - y / n)
    sigma = math.exp(rho * log_root) / (math.e * rho)
    return float(rho), float(sigma)


def taylor_of_expquadpoly(F: ExpQuadPoly, n_max: int) -> TaylorFunction:
    """Weyl-basis coefficients of F up to degree n_max."""
    if n_max < F.poly.degree:
        raise ValueError("n_max must be at least the polynomial degree")
    if abs(F.const.real) > EXP_CAP:
        raise ExpOverflowError(f"constant term overflows at index 0 (Re const = {F.const.real:.1f})")
    # Weyl coefficients of exp(quad z^2/2 + lin z) via the Hermite-type recurrence
    # (n+1) e_{n+1} = lin e_n + quad e_{n-1}, carried in the normalized form
    # g_n = e_n sqrt(n!) and rescaled every step to keep magnitudes finite.
    a, b = F.quad, F.lin
    g = np.zeros(n_max + 1, dtype=complex)
    log_scale = np.zeros(n_max + 1)
    g[0] = 1.0
    if n_max >= 1:
        g[1] = b
    for k in range(1, n_max):
        s = math.exp(log_scale[k - 1] - log_scale[k])
        nxt = (b * g[k] + a * math.sqrt(k) * g[k - 1] * s) / math.sqrt(k + 1)
        m = abs(nxt)
        log_scale[k + 1] = log_scale[k]
        if m > 1e100:
            g[k + 1] = nxt / m
            log_scale[k + 1] += math.log(m)
        else:
            g[k + 1] = nxt
    # Multiply by poly: z^j * z^n/sqrt(n!) = sqrt((n+j)!/n!) z^{n+j}/sqrt((n+j)!)
    n = np.arange(n_max + 1)
    out = np.zeros(n_max + 1, dtype=complex)
    with np.errstate(divide="ignore"):
        log_g = np.log(np.abs(g)) + log_scale
    phase_g = np.exp(1j * np.angle(g))
    total_log = np.full(n_max + 1, -np.inf)
    terms = []
    for j, pj in enumerate(F.poly.coeffs):
        if pj == 0:
            continue
        src = n[: n_max + 1 - j]
        lg = log_g[src] + 0.5 * (gammaln(src + j + 1) - gammaln(src + 1)) + math.log(abs(pj))
        ph = phase_g[src] * pj / abs(pj)
        terms.append((j, lg, ph))
        total_log[j:] = np.logaddexp(total_log[j:], lg)
    for k in range(n_max + 1):
        if total_log[k] + F.const.real > EXP_CAP:
            raise ExpOverflowError(f"Weyl coefficient {k} overflows (log magnitude {total_log[k] + F.const.real:.1f})")
    for j, lg, ph in terms:
        with np.errstate(under="ignore"):
            out[j:] += ph * np.exp(lg + F.const.real)
    out *= cmath.exp(1j * F.const.imag)
    return TaylorFunction.from_weyl(out)
