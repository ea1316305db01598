"""Root finding, zero continuation in tau, and the zero-dynamics formulas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import (
    CollisionError,
    ConvergenceError,
    DomainError,
    MissingMomentError,
    NonSimpleZeroError,
)
from .funcs import ComplexPoly, TaylorFunction, weyl_weights
from .heatflow import admissible_radius, heat

EPS = np.finfo(float).eps
COLLIDE = 1e-12
COLLISION_AHEAD = 16  # step underflow this many min_steps before a collision counts as one


@dataclass
class ZeroSet:
    zeros: np.ndarray
    multiplicities: list = field(default_factory=list)
    source_tau: complex = 0j

    def __post_init__(self):
        self.zeros = np.asarray(self.zeros, dtype=complex)
        if not self.multiplicities:
            self.multiplicities = [1] * len(self.zeros)

    def expanded(self) -> np.ndarray:
        return np.repeat(self.zeros, self.multiplicities)

    def __len__(self):
        return len(self.zeros)


def _zeros_array(zs) -> np.ndarray:
    if isinstance(zs, ZeroSet):
        return zs.expanded()
    return np.asarray(zs, dtype=complex)


# ---------------------------------------------------------------- root finding


def _horner(c: np.ndarray, z: np.ndarray):
    p = np.full_like(z, c[-1])
    dp = np.zeros_like(z)
    bound = np.full(z.shape, abs(c[-1]))
    az = np.abs(z)
    for ck in c[-2::-1]:
        dp = dp * z + p
        p = p * z + ck
        bound = bound * az + abs(ck)
    return p, dp, bound


def _newton_ratio(c: np.ndarray, z: np.ndarray):
    """p/p' and the relative residual |p| / sum |c_k||z|^k.

    Points outside the unit circle use the reversed polynomial in 1/z so that
    nothing overflows at high degree.
    """
    n = len(c) - 1
    ratio = np.empty_like(z)
    rel = np.empty(z.shape)
    inner = np.abs(z) <= 1
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if inner.any():
            p, dp, bound = _horner(c, z[inner])
            ratio[inner] = p / dp
            rel[inner] = np.abs(p) / bound
        outer = ~inner
        if outer.any():
            zo = z[outer]
            w = 1 / zo
            q, dq, bound = _horner(c[::-1], w)
            ratio[outer] = zo * q / (n * q - w * dq)  # no division by a tiny q
            rel[outer] = np.abs(q) / bound
    return ratio, rel


def _newton_polygon_guesses(c: np.ndarray) -> np.ndarray:
    """Initial points on circles whose radii come from the upper hull of log|c_k|."""
    n = len(c) - 1
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(c))
    pts = [k for k in range(n + 1) if np.isfinite(logc[k])]
    hull = []
    for k in pts:
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            if (logc[j] - logc[i]) * (k - i) <= (logc[k] - logc[i]) * (j - i):
                hull.pop()
            else:
                break
        hull.append(k)
    guesses = []
    offset = 0.4
    for i, j in zip(hull[:-1], hull[1:]):
        count = j - i
        radius = math.exp((logc[i] - logc[j]) / count)
        angles = 2 * math.pi * np.arange(count) / count + offset + 2 * math.pi * i / n
        guesses.append(radius * np.exp(1j * angles))
    zero_count = pts[0]
    out = np.concatenate(guesses) if guesses else np.empty(0, dtype=complex)
    return out, zero_count


def find_roots(p: ComplexPoly, tol: float = 1e-13, max_sweeps: int = 200,
               cluster: float = 1e-9) -> ZeroSet:
    """All roots by Aberth-Ehrlich iteration; near-coincident roots are merged."""
    c = np.asarray(p.coeffs, dtype=complex)
    n = len(c) - 1
    if n < 1:
        raise ValueError("polynomial must have degree >= 1")
    c = c / np.max(np.abs(c))
    z, zero_count = _newton_polygon_guesses(c)
    c = c[zero_count:]
    m = len(z)
    done = np.zeros(m, dtype=bool)
    for _ in range(max_sweeps):
        if m == 0 or done.all():
            break
        act = ~done
        ratio, rel = _newton_ratio(c, z[act])
        at_floor = rel <= 4 * n * EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            diff = z[act][:, None] - z[None, :]
            idx = np.flatnonzero(act)
            diff[np.arange(len(idx)), idx] = np.inf
            s = np.sum(1.0 / diff, axis=1)
            rs = ratio * s
            step = ratio / (1 - rs)
        finite = np.isfinite(step)
        step = np.where(finite, step, 0)
        # at the rounding floor, but only if no other approximation claims the same root
        settled = (at_floor & (np.abs(rs) < 0.1)) | (rel == 0)
        z[idx[~settled]] -= step[~settled]
        small = finite & (np.abs(step) <= tol * np.maximum(np.abs(z[act]), 1e-300))
        done[idx[small | settled]] = True
    if m and not done.all():
        _, rel = _newton_ratio(c, z)
        bad = np.flatnonzero(~done)
        worst = float(np.max(rel[bad]))
        raise ConvergenceError(
            f"Aberth iteration left {len(bad)} of {m} roots unconverged "
            f"after {max_sweeps} sweeps (worst relative residual {worst:.3e})"
        )
    roots = np.concatenate([np.zeros(zero_count, dtype=complex), z])
    return cluster_roots(roots, cluster)


def weyl_roots(weyl: np.ndarray, **kwargs) -> ZeroSet:
    """Roots of sum c_n z^n / sqrt(n!), found in a rescaled variable z = s u.

    The monomial coefficients c_n / sqrt(n!) underflow near degree 300, so the
    scaled coefficients c_n s^n / sqrt(n!) are formed in log space with s chosen
    to balance the first and last nonzero ones.
    """
    c = np.trim_zeros(np.asarray(weyl, dtype=complex), "b")
    nz = np.flatnonzero(c)
    if len(nz) == 0 or len(c) < 2:
        raise ValueError("polynomial must have degree >= 1")
    n = len(c) - 1
    k = np.arange(n + 1)
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(c)) - 0.5 * gammaln(k + 1)
    lo = nz[0]
    log_s = (logc[lo] - logc[n]) / (n - lo) if n > lo else 0.0
    logu = logc + k * log_s
    scaled = np.where(c != 0, c / np.where(c != 0, np.abs(c), 1) * np.exp(logu - logu[nz].max()), 0)
    zs = find_roots(ComplexPoly(scaled), **kwargs)
    z = zs.zeros * math.exp(log_s)
    # polish simple roots with Newton steps on the unscaled series
    F = TaylorFunction(c)
    dF = F.deriv(1)
    simple = np.asarray(zs.multiplicities) == 1
    for _ in range(2):
        with np.errstate(all="ignore"):
            f, df = F(z), dF(z)
            nz_new = z - f / df
            better = simple & np.isfinite(nz_new) & (np.abs(F(nz_new)) < np.abs(f))
        z = np.where(better, nz_new, z)
    return ZeroSet(z, zs.multiplicities, zs.source_tau)


def cluster_roots(roots, radius: float = 1e-9) -> ZeroSet:
    roots = np.asarray(roots, dtype=complex)
    order = np.argsort(roots.real)
    roots = roots[order]
    label = -np.ones(len(roots), dtype=int)
    groups = []
    for i in range(len(roots)):
        if label[i] >= 0:
            continue
        members = [i]
        label[i] = len(groups)
        stack = [i]
        while stack:
            k = stack.pop()
            near = np.flatnonzero((np.abs(roots - roots[k]) < radius) & (label < 0))
            label[near] = len(groups)
            members.extend(near.tolist())
            stack.extend(near.tolist())
        groups.append(members)
    zs = np.array([roots[g].mean() for g in groups], dtype=complex)
    return ZeroSet(zs, [len(g) for g in groups])


# ---------------------------------------------------------------- evaluation helpers


def derivatives(F, z, order: int = 2) -> list:
    """[F(z), F'(z), ..., F^(order)(z)] for any representation with ``deriv``."""
    out, g = [], F
    for i in range(order + 1):
        out.append(g(z))
        if i < order:
            g = g.deriv()
    return out


def _derivative_chain(F, order: int) -> list:
    chain = [F]
    for _ in range(order):
        chain.append(chain[-1].deriv())
    return chain


# ---------------------------------------------------------------- velocity laws


def zero_velocity_simple(F_at, z: complex, scale: float = 1.0) -> complex:
    """tau-derivative of a simple zero: half the ratio of the second to first derivative."""
    vals = F_at(z)
    d1, d2 = vals[1], vals[2]
    if abs(d1) <= 1e-12 * scale:
        raise NonSimpleZeroError(f"|F'(z)| = {abs(d1):.3e} at z = {z}: zero is not simple")
    return 0.5 * d2 / d1


def _others(zs: np.ndarray, j: int) -> np.ndarray:
    d = zs[j] - np.delete(zs, j)
    if d.size and np.min(np.abs(d)) < COLLIDE:
        raise CollisionError(f"zero {j} collides with another zero")
    return d


def velocity_poly(zs, j: int) -> complex:
    """Sum over k != j of 1/(z_j - z_k)."""
    d = _others(_zeros_array(zs), j)
    return complex(np.sum(1.0 / d))


def acceleration(zs, j: int) -> complex:
    """-2 times the sum over k != j of (z_j - z_k)^-3."""
    d = _others(_zeros_array(zs), j)
    return complex(-2.0 * np.sum(d**-3.0))


def _from_base(zs: np.ndarray, c: complex) -> np.ndarray:
    u = zs - c
    if np.min(np.abs(u)) < COLLIDE:
        raise CollisionError(f"base point {c} coincides with a zero")
    return u


def velocity_S1(zeros, j: int, a1: complex, c: complex = 0) -> complex:
    """Zero velocity for a genus-one product with first log-derivative a1 at c."""
    zs = _zeros_array(zeros)
    d = _others(zs, j)
    u = _from_base(zs, c)
    return complex(a1 + np.sum(1.0 / d) + np.sum(1.0 / u))


def velocity_S2(zeros, j: int, a1: complex, a2: complex, c: complex = 0) -> complex:
    """Zero velocity for a genus-two product with log-derivatives a1, a2 at c."""
    zs = _zeros_array(zeros)
    d = _others(zs, j)
    u = _from_base(zs, c)
    zc = zs[j] - c
    return complex(a1 + a2 * zc + np.sum(1.0 / d) + np.sum(1.0 / u + zc / u**2))


def aux_derivatives(case: str, zeros, a1: complex, a2: complex = 0, c: complex = 0):
    """tau-derivatives of the log-derivative coefficients a1 (and a2) at c."""
    u = _from_base(_zeros_array(zeros), c) if len(zeros) else np.empty(0, dtype=complex)
    s2, s3, s4 = (np.sum(u**-p) for p in (2.0, 3.0, 4.0))
    if case == "S1":
        return complex(a1 * s2 + s3), 0j
    if case == "S2":
        return complex(-a1 * a2 + s3), complex(-a2 * a2 + 2 * a1 * s3 + 3 * s4)
    raise ValueError(f"case must be S1 or S2, got {case!r}")


@dataclass
class MomentTable:
    """Power sums M(j, p) of 1/(z_j - z_k) over k != j, plus a1, a2 at a base point."""

    j: int
    M: dict
    a1: complex = 0j
    a2: complex = 0j
    case: str = "S0"
    c: complex = 0j

    def __getitem__(self, p: int) -> complex:
        try:
            return self.M[p]
        except KeyError:
            raise MissingMomentError(f"moment M(j, {p}) not in table") from None


def moment_table(zeros, j: int, p_max: int = 6, a1=0j, a2=0j, case="S0", c=0j) -> MomentTable:
    d = _others(_zeros_array(zeros), j)
    M = {p: complex(np.sum(d ** -float(p))) for p in range(2, p_max + 1)}
    return MomentTable(j, M, complex(a1), complex(a2), case, complex(c))


def moment_derivative(mt: MomentTable, p: int) -> complex:
    """tau-derivative of M(j, p) in the S0/S1 cases."""
    if mt.case not in ("S0", "S1"):
        raise ValueError("moment recursion applies to cases S0 and S1")
    cross = sum(mt[p + 2 - n] * mt[n] for n in range(2, p + 1))
    return -0.5 * p * ((p + 3) * mt[p + 2] - cross)


def regularized_M2(zeros, j: int, c: complex = 0) -> complex:
    """Sum over k of [k != j](z_j - z_k)^-2 - (z_k - c)^-2."""
    zs = _zeros_array(zeros)
    d = _others(zs, j)
    u = _from_base(zs, c)
    return complex(np.sum(d**-2.0) - np.sum(u**-2.0))


def third_derivative(case: str, mt: MomentTable, reg_M2: complex | None = None) -> complex:
    """Third tau-derivative of the tracked zero.

    S0/S1: 18 M5 - 6 M2 M3.  S2: 18 M5 + 6 (a2 - R) M3 with R the regularized
    second power sum; this is the S0 law for the zeros of the polynomial factor
    combined with the Gaussian rescaling of a genus-two function.
    """
    if case in ("S0", "S1"):
        return complex(18 * mt[5] - 6 * mt[2] * mt[3])
    if case == "S2":
        if reg_M2 is None:
            raise MissingMomentError("S2 third derivative needs the regularized M2")
        return complex(18 * mt[5] + 6 * (mt.a2 - reg_M2) * mt[3])
    raise ValueError(f"unknown case {case!r}")


def rescaled_velocity(y_list, j: int, a1: complex, a2: complex, s: float) -> complex:
    """d y_j / ds for y = z cosh(s), tau = tanh(s), base point 0."""
    ys = _zeros_array(y_list)
    d = _others(ys, j)
    u = _from_base(ys, 0)
    ch, th = math.cosh(s), math.tanh(s)
    y = ys[j]
    return complex(a1 / ch + y * (a2 / ch**2 + th) + np.sum(1.0 / d) + np.sum(1.0 / u + y / u**2))


@dataclass
class SystemDerivative:
    dzeros: np.ndarray
    da1: complex
    da2: complex


def truncated_system_step(zeros, a1: complex, a2: complex, c: complex = 0, N: int | None = None) -> SystemDerivative:
    """Right-hand side of the truncated genus-two system for all tracked quantities.

    Only the N zeros nearest to c are kept (all of them when N is None).
    """
    zs = _zeros_array(zeros)
    if N is not None:
        zs = zs[np.argsort(np.abs(zs - c))[:N]]
    u = _from_base(zs, c)
    diff = zs[:, None] - zs[None, :]
    np.fill_diagonal(diff, np.inf)
    if np.min(np.abs(diff)) < COLLIDE:
        raise CollisionError("two zeros of the truncated system collide")
    pair = np.sum(1.0 / diff, axis=1)
    base = np.sum(1.0 / u)
    dz = a1 + a2 * u + pair + base + u * np.sum(u**-2.0)
    da1, da2 = aux_derivatives("S2", zs, a1, a2, c)
    return SystemDerivative(dz, da1, da2)


def default_base_point(F=None, zeros=None) -> complex:
    """0 unless it is (numerically) a zero; otherwise 1/4 + i/e."""
    alt = 0.25 + 1j / math.e
    if zeros is not None and len(zeros) and np.min(np.abs(_zeros_array(zeros))) < 1e-9:
        return alt
    if F is not None:
        f0, f1 = derivatives(F, 0.0, 1)
        if abs(f0) <= 1e-12 * max(1.0, abs(f1)):
            return alt
    return 0j


def log_derivatives_at(F, c: complex) -> tuple[complex, complex]:
    """a1 = (log F)'(c) and a2 = (log F)''(c)."""
    f0, f1, f2 = derivatives(F, c, 2)
    if f0 == 0:
        raise CollisionError(f"base point {c} is a zero")
    a1 = f1 / f0
    return complex(a1), complex(f2 / f0 - a1 * a1)


# ---------------------------------------------------------------- continuation


@dataclass
class StepControl:
    initial_step: float = 1e-2
    min_step: float = 1e-7
    max_newton: int = 12
    collision_radius: float = 1e-6
    start_tol: float = 1e-8
    newton_tol: float = 1e-15
    floor_tol: float = 1e-11


@dataclass
class ZeroTrajectory:
    samples: list
    status: str
    start: complex
    path_values: list = field(default_factory=list)
    message: str = ""

    @property
    def final(self) -> complex:
        return self.samples[-1][1]


def _rounding_scale(F, z: complex) -> float:
    """Sum of the moduli of the series terms of F at z, or 0 when F is not a series."""
    if isinstance(F, TaylorFunction):
        return float(np.abs(np.dot(np.abs(F.weyl_coeffs), weyl_weights(F.n_max, abs(z)))))
    if isinstance(F, ComplexPoly):
        return float(np.polynomial.polynomial.polyval(abs(z), np.abs(F.coeffs)))
    return 0.0


def _newton(chain, z, ctrl: StepControl):
    """Newton iterations on the flowed function; returns (z, ok).

    Converged when the correction drops below newton_tol, or when corrections
    stop shrinking while already below the rounding floor: floor_tol, or the
    correction that evaluation rounding in a cancelling series can cause.
    """
    noise = 8 * EPS * _rounding_scale(chain[0], z)
    last, floor = math.inf, 0.0
    for _ in range(ctrl.max_newton):
        f = chain[0](z)
        f1 = chain[1](z)
        if f1 == 0 or not np.isfinite(f1):
            return z, False
        dz = f / f1
        size = abs(dz)
        scale = max(1.0, abs(z))
        floor = max(ctrl.floor_tol * scale, noise / abs(f1))
        if size <= ctrl.newton_tol * scale:
            return z - dz, True
        if size >= 0.5 * last:
            if last <= floor:
                return z, True
            if size > last:
                return z, False
        z = z - dz
        last = size
    return z, last <= floor


def _neighbor_distance(f1, f2) -> float:
    return math.inf if f2 == 0 else abs(2 * f1 / f2)


def track_zero(F, z0: complex, tau_path, ctrl: StepControl | None = None) -> ZeroTrajectory:
    """Continue a simple zero of F along a piecewise-linear path of flow times."""
    ctrl = ctrl or StepControl()
    path = [complex(t) for t in np.atleast_1d(tau_path)]
    radius = admissible_radius(F)
    tau = path[0]
    if abs(tau) >= radius:
        raise DomainError(f"path start {tau} outside admissible radius {radius:.6g}", radius=radius)
    chain = _derivative_chain(heat(F, tau) if tau != 0 else F, 2)
    z = complex(z0)
    f, f1, f2 = (g(z) for g in chain)
    scale = max(abs(f), abs(f1), abs(f2), 1e-300)
    if abs(f1) <= 1e-12 * scale:
        if abs(f) <= ctrl.start_tol * scale:
            raise NonSimpleZeroError(f"start point {z0} is a multiple zero")
        raise ValueError(f"start point {z0} is not a zero (|F| = {abs(f):.3e})")
    if abs(f / f1) > ctrl.start_tol * max(1.0, abs(z)):
        raise ValueError(f"start point {z0} is not a zero within {ctrl.start_tol} (Newton step {abs(f / f1):.3e})")
    z, _ = _newton(chain, z, ctrl)
    samples = [(tau, z)]
    path_values = [z]
    h = ctrl.initial_step
    status, message = "completed", ""
    for target in path[1:]:
        while tau != target and status == "completed":
            f1, f2 = chain[1](z), chain[2](z)
            gap = _neighbor_distance(f1, f2)
            if gap < ctrl.collision_radius:
                status, message = "collision_abort", f"neighbor zero within {gap:.3e} at tau={tau}"
                break
            velocity = 0.5 * f2 / f1
            remaining = target - tau
            while True:
                step = remaining if abs(remaining) <= h else remaining / abs(remaining) * h
                new_tau = tau + step
                if abs(new_tau) >= radius:
                    status = "domain_boundary"
                    message = f"|tau| reached admissible radius {radius:.6g}"
                    break
                new_chain = _derivative_chain(heat(F, new_tau), 2)
                guess = z + velocity * step
                znew, ok = _newton(new_chain, guess, ctrl)
                if ok and abs(znew - guess) > 0.3 * gap:
                    ok = False
                if ok:
                    break
                h /= 2
                if h < ctrl.min_step:
                    # near a square-root collision gap ~ 2k sqrt(d) and velocity ~ k/(2 sqrt(d)),
                    # so gap/(4|velocity|) estimates the remaining distance d in tau
                    ahead = gap / (4 * abs(velocity)) if velocity != 0 else math.inf
                    if ahead < COLLISION_AHEAD * ctrl.min_step:
                        status = "collision_abort"
                        message = f"neighbor zero at {gap:.3e}, collision about {ahead:.1e} ahead of tau={tau}"
                    else:
                        status, message = "newton_fail", f"step fell below {ctrl.min_step} at tau={tau}"
                        blur = 8 * EPS * _rounding_scale(new_chain[0], z) / abs(f1)
                        if blur > 1e-3 * gap:
                            message += f"; series rounding blurs the zero by about {blur:.1e}"
                    break
            if status != "completed":
                break
            tau, z, chain = new_tau, znew, new_chain
            if abs(target - tau) < 1e-15 * max(1.0, abs(target)):
                tau = target
            samples.append((tau, z))
            h = min(2 * h, ctrl.initial_step)
        if status != "completed":
            break
        path_values.append(z)
    return ZeroTrajectory(samples, status, complex(z0), path_values, message)


def track_zeros(F, starts, tau_path, ctrl: StepControl | None = None) -> list[ZeroTrajectory]:
    """Track several zeros; failures become trajectories with a non-completed status."""
    out = []
    for z0 in starts:
        try:
            out.append(track_zero(F, z0, tau_path, ctrl))
        except (NonSimpleZeroError, ValueError) as exc:
            out.append(ZeroTrajectory([(complex(np.atleast_1d(tau_path)[0]), complex(z0))],
                                      "newton_fail", complex(z0), [], str(exc)))
    return out
