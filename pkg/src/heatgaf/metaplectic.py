"""SL(2,R) in its SU(1,1) form, the rotation times positive factorization, and
the metaplectic operators V(A) on the class exp(quadratic) * polynomial."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, HeatGafError
from .funcs import ExpQuadPoly, scale_argument
from .gaf import apply_Vtau

UNIT_TOL = 1e-12


def to_su11(mat) -> tuple[complex, complex]:
    """(p, q) with p = (a - ib + ic + d)/2 and q = (a + ib + ic - d)/2."""
    m = np.asarray(mat, dtype=float)
    if m.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    det = float(np.linalg.det(m))
    if abs(det - 1) > 1e-10:
        raise ValueError(f"determinant {det:.12g} is not 1")
    (a, b), (c, d) = m
    p = complex(a + d, c - b) / 2
    q = complex(a - d, b + c) / 2
    gap = abs(p) ** 2 - abs(q) ** 2 - 1
    if abs(gap) > 1e-10 * max(1.0, abs(p) ** 2):
        raise ValueError(f"|p|^2 - |q|^2 - 1 = {gap:.3e}")
    return p, q


def from_su11(p: complex, q: complex) -> np.ndarray:
    """Inverse of to_su11."""
    a = (p.real + q.real)
    d = (p.real - q.real)
    b = (q.imag - p.imag)
    c = (p.imag + q.imag)
    return np.array([[a, b], [c, d]])


@dataclass(frozen=True)
class GroupElement:
    """A matrix of SL(2,R) with its SU(1,1) pair and a chosen sign for V(A).

    ``sign`` multiplies the principal branch of exp(-i arg(p)/2).
    """

    mat: np.ndarray
    pq: tuple
    sign: int = 1

    @classmethod
    def from_matrix(cls, mat, sign: int = 1) -> "GroupElement":
        m = np.asarray(mat, dtype=float)
        return cls(m, to_su11(m), sign)

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls.from_matrix(np.eye(2))

    @classmethod
    def rotation(cls, theta: float) -> "GroupElement":
        """Rotation by theta; the sign follows exp(-i theta/2) continuously in theta."""
        c, s = math.cos(theta), math.sin(theta)
        g = cls.from_matrix([[c, -s], [s, c]])
        principal = cmath.exp(-0.5j * cmath.phase(g.pq[0]))
        wanted = cmath.exp(-0.5j * theta)
        sign = 1 if abs(wanted - principal) < abs(wanted + principal) else -1
        return cls(g.mat, g.pq, sign)

    @property
    def p(self) -> complex:
        return self.pq[0]

    @property
    def q(self) -> complex:
        return self.pq[1]

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        """Matrix product; the sign of the product is reset to +1."""
        return GroupElement.from_matrix(self.mat @ other.mat)


@dataclass(frozen=True)
class Factorization:
    theta: float
    tau: complex


def factor(g: GroupElement) -> Factorization:
    """A = R(theta) A_tau with theta = arg p and tau = q/p."""
    return Factorization(cmath.phase(g.p), g.q / g.p)


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def atau_matrix(tau: complex) -> GroupElement:
    """The positive symmetric element with q/p = tau."""
    tau = complex(tau)
    if abs(tau) >= 1:
        raise DomainError(f"|tau| = {abs(tau):.6g} must be < 1", radius=1.0)
    s = math.sqrt(1 - abs(tau) ** 2)
    m = np.array([[1 + tau.real, tau.imag], [tau.imag, 1 - tau.real]]) / s
    return GroupElement.from_matrix(m)


def reconstruct(f: Factorization) -> np.ndarray:
    return rotation_matrix(f.theta) @ atau_matrix(f.tau).mat


def random_element(rng: np.random.Generator, tau_max: float = 0.6) -> GroupElement:
    """R(theta) A_tau with theta uniform and |tau| <= tau_max."""
    theta = rng.uniform(-math.pi, math.pi)
    tau = tau_max * math.sqrt(rng.uniform()) * cmath.exp(2j * math.pi * rng.uniform())
    return GroupElement.from_matrix(rotation_matrix(theta) @ atau_matrix(tau).mat)


def apply_VA(F: ExpQuadPoly, g: GroupElement) -> ExpQuadPoly:
    """sign * exp(-i theta/2) [V_tau F](exp(-i theta) z)."""
    f = factor(g)
    G = apply_Vtau(F, f.tau) if f.tau != 0 else F
    G = scale_argument(G, cmath.exp(-1j * f.theta))
    return G.times_const(g.sign * cmath.exp(-0.5j * f.theta))


@dataclass
class CompositionResult:
    match: bool
    sign: int
    rel_error: float
    skipped: bool = False
    reason: str = ""


def _distance(F: ExpQuadPoly, G: ExpQuadPoly, sign: int) -> float:
    """Relative coefficient distance between F and sign*G."""
    scale = max(1.0, abs(G.quad), abs(G.lin))
    d = max(abs(F.quad - G.quad), abs(F.lin - G.lin)) / scale
    pf = F.poly.coeffs * cmath.exp(F.const)
    pg = G.poly.coeffs * cmath.exp(G.const) * sign
    n = max(len(pf), len(pg))
    pf = np.pad(pf, (0, n - len(pf)))
    pg = np.pad(pg, (0, n - len(pg)))
    ref = max(float(np.max(np.abs(pg))), 1e-300)
    return max(d, float(np.max(np.abs(pf - pg))) / ref)


def compose_check(g1: GroupElement, g2: GroupElement, F: ExpQuadPoly,
                  tol: float = 1e-9) -> CompositionResult:
    """Compare V(g1) V(g2) F with V(g1 g2) F up to a global sign."""
    try:
        lhs = apply_VA(apply_VA(F, g2), g1)
        rhs = apply_VA(F, g1 @ g2)
    except HeatGafError as exc:
        return CompositionResult(False, 0, math.nan, True, str(exc))
    errs = {s: _distance(lhs, rhs, s) for s in (1, -1)}
    sign = min(errs, key=errs.get)
    return CompositionResult(errs[sign] < tol, sign, errs[sign])


def hyperbolic_phi_psi(p: complex, q: complex, tau: complex) -> tuple[complex, complex]:
    """phi = (p tau + q)/(conj(q) tau + conj(p)) and psi = (q conj(tau) + p)/|q conj(tau) + p|."""
    p, q, tau = complex(p), complex(q), complex(tau)
    if abs(abs(p) ** 2 - abs(q) ** 2 - 1) > 1e-10 * max(1.0, abs(p) ** 2):
        raise ValueError("need |p|^2 - |q|^2 = 1")
    if abs(tau) >= 1:
        raise DomainError(f"|tau| = {abs(tau):.6g} must be < 1", radius=1.0)
    phi = (p * tau + q) / (q.conjugate() * tau + p.conjugate())
    u = q * tau.conjugate() + p
    return phi, u / abs(u)


def zero_action(g: GroupElement, zeros) -> np.ndarray:
    """Map zeros of the heat flow at tau = q/p to zeros of V(g)F: z -> e^{i theta} z / sqrt(1-|tau|^2)."""
    f = factor(g)
    zeros = np.asarray(zeros, dtype=complex)
    return cmath.exp(1j * f.theta) * zeros / math.sqrt(1 - abs(f.tau) ** 2)
