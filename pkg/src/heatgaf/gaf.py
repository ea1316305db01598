"""Sampling the Gaussian analytic function and the experiments built on it."""

from __future__ import annotations

import cmath
import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, HeatGafError, SingularFlowError
from .funcs import (
    ComplexPoly,
    ExpQuadPoly,
    ExpQuadSum,
    ExpQuadTaylor,
    TaylorFunction,
    exp_linear_weyl,
    scale_argument,
    weyl_product,
    weyl_weights,
    taylor_of_expquadpoly,
)
from .heatflow import heat_expquadpoly, heat_matrix, heat_taylor, heat_weyl
from .zeros import StepControl, track_zero, weyl_roots

GAF_ORDER = 2.0
GAF_TYPE = 0.5


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator addressed by (seed, key...), independent of call order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def anchor_stream(a: complex) -> int:
    """Stable integer label for an anchor point, used as an RNG key."""
    a = complex(a)
    return zlib.crc32(f"{a.real!r},{a.imag!r}".encode())


def standard_complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2)


@dataclass(frozen=True)
class GafSample:
    taylor: TaylorFunction
    n_max: int
    seed: int
    key: tuple = ()

    def __call__(self, z):
        return self.taylor(z)

    def poly(self) -> ComplexPoly:
        return self.taylor.to_poly()


def sample_gaf(n_max: int, seed: int, *key: int) -> GafSample:
    """Weyl coefficients xi_0..xi_{n_max}, i.i.d. standard complex Gaussian."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    xi = standard_complex_normal(trial_rng(seed, *key), n_max + 1)
    return GafSample(TaylorFunction(xi, n_max, GAF_ORDER, GAF_TYPE), n_max, int(seed), tuple(key))


def apply_Ta(F: ExpQuadPoly, a: complex) -> ExpQuadPoly:
    """Unitarized translation exp(-|a|^2/2) exp(conj(a) z) F(z - a)."""
    a = complex(a)
    q, b, c = F.quad, F.lin, F.const
    return ExpQuadPoly(
        q,
        b - q * a + a.conjugate(),
        c + q * a * a / 2 - b * a - abs(a) ** 2 / 2,
        F.poly.compose_affine(1, -a),
    )


def translate_weyl(c, a: complex, n_out: int) -> np.ndarray:
    """Weyl coefficients of T_a applied to sum c_n z^n/sqrt(n!), truncated at n_out.

    Columns of the (unitary) translation matrix are built by the recurrence
    T_a[z e_n] = (z - a) T_a[e_n], which avoids expanding (z - a)^n in monomials.
    """
    a = complex(a)
    c = np.asarray(c, dtype=complex)
    m = np.arange(n_out + 1)
    ab = a.conjugate()
    if ab == 0:
        col = np.zeros(n_out + 1, dtype=complex)
        col[0] = 1.0
    else:
        col = np.exp(-abs(a) ** 2 / 2 + m * math.log(abs(ab)) - 0.5 * gammaln(m + 1) + 1j * m * cmath.phase(ab))
    up = np.sqrt(np.arange(1, n_out + 1))
    out = c[0] * col
    for n in range(1, len(c)):
        raised = np.zeros_like(col)
        raised[1:] = col[:-1] * up
        col = (raised - a * col) / math.sqrt(n)
        out = out + c[n] * col
    return out


@dataclass(frozen=True)
class ConditionedGaf:
    base: GafSample
    anchor: complex
    representation: ExpQuadPoly

    def __call__(self, z):
        a = self.anchor
        z = np.asarray(z, dtype=complex)
        out = np.exp(-abs(a) ** 2 / 2 + a.conjugate() * z) * self.base.taylor(z - a)
        return out if out.ndim else complex(out)

    def taylor(self, extra: int | None = None) -> TaylorFunction:
        """Weyl expansion about 0, for flows that do not use the closed form.

        The translated basis functions spread to index about n + |a|^2, so the
        default margin grows with the anchor.
        """
        if extra is None:
            r = abs(self.anchor)
            extra = int(r * r + 8 * r + 80)
        coeffs = translate_weyl(self.base.taylor.weyl_coeffs, self.anchor, self.base.n_max + extra)
        return TaylorFunction(coeffs, len(coeffs) - 1, GAF_ORDER, GAF_TYPE)

    def local_taylor(self, radius: float = 6.0) -> TaylorFunction:
        """Weyl series of u -> exp(conj(a) u) W0(u), equal to F(a + u) up to exp(|a|^2/2).

        Good for |u| <= radius; the flow commutes with translation, so zeros of
        the flowed local series are the flowed zeros shifted by -a.
        """
        b = self.anchor.conjugate()
        n_out = self.base.n_max + int(math.e * abs(b) * radius) + 60
        coeffs = weyl_product(exp_linear_weyl(b, n_out), self.base.taylor.weyl_coeffs, n_out)
        return TaylorFunction(coeffs, n_out, GAF_ORDER, GAF_TYPE)


def condition_at(g: GafSample, a: complex) -> ConditionedGaf:
    """GAF conditioned to vanish at a: drop xi_0, then translate by a."""
    c = np.array(g.taylor.weyl_coeffs)
    c[0] = 0
    base = GafSample(TaylorFunction(c, g.n_max, GAF_ORDER, GAF_TYPE), g.n_max, g.seed, g.key)
    rep = apply_Ta(ExpQuadPoly(0, 0, 0, base.poly()), a)
    return ConditionedGaf(base, complex(a), rep)


def apply_Vtau(F, tau: complex):
    """(1-|tau|^2)^(1/4) exp(conj(tau) z^2/2) (heat flow at tau)(z sqrt(1-|tau|^2)).

    The Gaussian factor carries conj(tau); that choice makes the map unitary on
    the Fock space (the two agree for real tau).
    """
    tau = complex(tau)
    if abs(tau) >= 1:
        raise DomainError(f"|tau| = {abs(tau):.6g} must be < 1", radius=1.0)
    s2 = 1 - abs(tau) ** 2
    s = math.sqrt(s2)
    const = math.log(s2) / 4
    if isinstance(F, ExpQuadPoly):
        G = scale_argument(heat_expquadpoly(F, tau), s)
        return ExpQuadPoly(G.quad + tau.conjugate(), G.lin, G.const + const, G.poly)
    if isinstance(F, ExpQuadSum):
        return ExpQuadSum(tuple(apply_Vtau(t, tau) for t in F.terms))
    if isinstance(F, TaylorFunction):
        G = heat_taylor(F, tau).rescaled(s)
        return ExpQuadTaylor(tau.conjugate(), 0j, complex(const), G)
    raise TypeError(f"cannot apply V_tau to {type(F).__name__}")


def gaf_batch(n_max: int, seed: int, trials: int, *key: int) -> np.ndarray:
    """Rows are the Weyl coefficients of sample_gaf(n_max, seed, *key, t), t < trials."""
    return np.stack([standard_complex_normal(trial_rng(seed, *key, t), n_max + 1)
                     for t in range(trials)])


def flowed_values(coeffs: np.ndarray, points, tau: complex, kind: str = "flow") -> np.ndarray:
    """Values at ``points`` of the flowed rows of ``coeffs`` ('flow') or of V_tau applied to them ('vtau')."""
    tau = complex(tau)
    if abs(tau) >= 1:
        raise DomainError(f"|tau| = {abs(tau):.6g} must be < 1", radius=1.0)
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    n = coeffs.shape[-1] - 1
    rows = coeffs @ heat_matrix(n, tau).T
    if kind == "flow":
        return rows @ weyl_weights(n, points)
    if kind != "vtau":
        raise ValueError(f"unknown kind {kind!r}")
    s2 = 1 - abs(tau) ** 2
    vals = (rows * math.sqrt(s2) ** np.arange(n + 1)) @ weyl_weights(n, points)
    return vals * s2**0.25 * np.exp(tau.conjugate() * points**2 / 2)


def covariance_pred(z, w, tau, sigma):
    """E[G_tau(z) conj(G_sigma(w))] for the heat-flowed GAF."""
    z, w = np.asarray(z, dtype=complex), np.asarray(w, dtype=complex)
    tau, sigma = complex(tau), complex(sigma)
    d = 1 - tau * sigma.conjugate()
    if abs(d) < 1e-14:
        raise SingularFlowError("1 - tau conj(sigma) vanishes")
    wb = np.conj(w)
    out = np.exp(-(z * z * sigma.conjugate() + wb * wb * tau) / (2 * d) + z * wb / d) / cmath.sqrt(d)
    return out if out.ndim else complex(out)


def covariance_Q_pred(z, w, tau, sigma):
    """E[Q_tau(z) conj(Q_sigma(w))] for Q_tau = V_tau G."""
    z, w = np.asarray(z, dtype=complex), np.asarray(w, dtype=complex)
    tau, sigma = complex(tau), complex(sigma)
    d = 1 - tau * sigma.conjugate()
    if abs(d) < 1e-14:
        raise SingularFlowError("1 - tau conj(sigma) vanishes")
    r = math.sqrt(1 - abs(tau) ** 2) * math.sqrt(1 - abs(sigma) ** 2) / d
    wb = np.conj(w)
    expo = z * wb * r + 0.5 * z * z * (tau.conjugate() - sigma.conjugate()) / d + 0.5 * wb * wb * (sigma - tau) / d
    out = cmath.sqrt(r) * np.exp(expo)
    return out if out.ndim else complex(out)


SERIES_LIMIT = 6.0


@dataclass
class ResidualReport:
    anchor: complex
    tau: float
    residuals: np.ndarray
    statuses: list
    aborted: int
    trials: int
    method: str = "series"

    @property
    def abort_rate(self) -> float:
        return self.aborted / self.trials if self.trials else 0.0


def residual_method(a: complex, tau: float) -> str:
    """'series' flows the local expansion of exp(conj(a) u) W0(u) termwise; that
    loses about exp(|tau| |a|^2) in relative accuracy, so large anchors use the
    closed-form flow of the exponential factor instead ('closed_form')."""
    return "series" if abs(tau) * abs(a) ** 2 <= SERIES_LIMIT else "closed_form"


def anchored_zero(a: complex, tau: float, n_max: int, seed: int, trial: int,
                  ctrl: StepControl | None = None, method: str | None = None):
    """Track the zero of the flowed conditioned GAF that starts at a; returns (z, status)."""
    a = complex(a)
    method = method or residual_method(a, tau)
    g = sample_gaf(n_max, seed, anchor_stream(a), trial)
    cg = condition_at(g, a)
    if method == "series":
        F, shift = cg.local_taylor(radius=abs(tau) * abs(a) + 4.0), a
    else:
        # flow(exp(b u) W0(u))(u) = exp(b u - tau b^2/2) flow(W0)(u - b tau)
        F, shift = cg.base.taylor, a + tau * a.conjugate()
    try:
        tr = track_zero(F, 0.0, [0.0, tau], ctrl)
    except (HeatGafError, ValueError) as exc:
        return None, f"newton_fail: {exc}"
    return (shift + tr.final if tr.status == "completed" else None), tr.status


def residual_experiment(a: complex, tau: float, M: int, n_max: int = 120, seed: int = 0,
                        ctrl: StepControl | None = None, method: str | None = None) -> ResidualReport:
    """Samples of z^a(tau) - a - tau conj(a); aborted trials are counted, not resampled."""
    a = complex(a)
    if abs(tau) >= 1:
        raise DomainError("|tau| must be < 1", radius=1.0)
    method = method or residual_method(a, tau)
    residuals, statuses = [], []
    for i in range(M):
        z, status = anchored_zero(a, tau, n_max, seed, i, ctrl, method)
        statuses.append(status)
        if z is not None:
            residuals.append(z - a - tau * a.conjugate())
    res = np.array(residuals, dtype=complex)
    return ResidualReport(a, tau, res, statuses, M - len(res), M, method)


@dataclass
class TruncationReport:
    max_displacement: float
    matched: int
    unmatched_small: list = field(default_factory=list)
    unmatched_large: list = field(default_factory=list)
    count_small: int = 0
    count_large: int = 0


def flowed_truncation_zeros(g: GafSample, tau: complex, N: int) -> np.ndarray:
    coeffs = heat_weyl(g.taylor.weyl_coeffs[: N + 1], tau)
    return weyl_roots(coeffs).expanded()


def truncation_zero_agreement(g: GafSample, tau: complex, K: float, N_small: int, N_large: int,
                              match_radius: float = 0.1) -> TruncationReport:
    """Compare zeros in |z| <= K of the flowed degree-N_small and degree-N_large truncations."""
    if not N_small <= N_large <= g.n_max:
        raise ValueError("need N_small <= N_large <= n_max")
    zs = flowed_truncation_zeros(g, tau, N_small)
    zl = flowed_truncation_zeros(g, tau, N_large)
    inner_s = zs[np.abs(zs) <= K]
    inner_l = zl[np.abs(zl) <= K]
    worst, matched, lost_s = 0.0, 0, []
    used = set()
    for z in inner_s:
        d = np.abs(zl - z)
        k = int(np.argmin(d))
        if d[k] <= match_radius and k not in used:
            used.add(k)
            matched += 1
            worst = max(worst, float(d[k]))
        else:
            lost_s.append(complex(z))
    lost_l = [complex(zl[k]) for k in np.flatnonzero(np.abs(zl) <= K) if k not in used]
    return TruncationReport(worst, matched, lost_s, lost_l, len(inner_s), len(inner_l))
