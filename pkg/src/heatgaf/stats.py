"""Monte Carlo covariance estimates, two-sample tests and zero counts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats as sps


@dataclass
class CovarianceGrid:
    """estimates[i, j] averages F(z_i) conj(F(w_j)); std_errors = sample std / sqrt(trials)."""

    points: list
    estimates: np.ndarray
    std_errors: np.ndarray
    trials: int

    def z_scores(self, prediction: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.estimates - prediction) / self.std_errors


@dataclass
class TestReport:
    statistic: float
    p_value: float
    method: str
    n1: int
    n2: int

    __test__ = False  # not a pytest class


class CovarianceAccumulator:
    """Running sums of F(z_i) conj(F(w_j)) and of its squared modulus; merges associatively."""

    def __init__(self, nz: int, nw: int):
        self.total = np.zeros((nz, nw), dtype=complex)
        self.total_sq = np.zeros((nz, nw))
        self.count = 0

    def add(self, fz: np.ndarray, fw: np.ndarray) -> None:
        prod = np.outer(fz, np.conj(fw))
        self.total += prod
        self.total_sq += np.abs(prod) ** 2
        self.count += 1

    def add_batch(self, fz: np.ndarray, fw: np.ndarray) -> None:
        """Rows of fz and fw are trials."""
        prod = fz[:, :, None] * np.conj(fw)[:, None, :]
        self.total += prod.sum(axis=0)
        self.total_sq += (np.abs(prod) ** 2).sum(axis=0)
        self.count += fz.shape[0]

    def merge(self, other: "CovarianceAccumulator") -> "CovarianceAccumulator":
        out = CovarianceAccumulator(*self.total.shape)
        out.total = self.total + other.total
        out.total_sq = self.total_sq + other.total_sq
        out.count = self.count + other.count
        return out

    def result(self, points: list) -> CovarianceGrid:
        m = self.count
        mean = self.total / m
        var = np.maximum(self.total_sq / m - np.abs(mean) ** 2, 0.0)
        if m > 1:
            var *= m / (m - 1)
        return CovarianceGrid(points, mean, np.sqrt(var / m), m)


def _probe_grid(probes) -> tuple[np.ndarray, np.ndarray]:
    """probes is either (zs, ws) arrays or a single array used for both."""
    if isinstance(probes, tuple) and len(probes) == 2:
        zs, ws = probes
    else:
        zs = ws = probes
    return np.atleast_1d(np.asarray(zs, dtype=complex)), np.atleast_1d(np.asarray(ws, dtype=complex))


def empirical_covariance(sampler: Callable[[int, int], Callable], probes, M: int,
                         seed: int = 0) -> CovarianceGrid:
    """Average F(z) conj(F(w)) over M trials; sampler(seed, trial) returns F."""
    if M < 100:
        raise ValueError("need M >= 100 trials")
    zs, ws = _probe_grid(probes)
    acc = CovarianceAccumulator(len(zs), len(ws))
    for trial in range(M):
        F = sampler(seed, trial)
        acc.add(np.asarray(F(zs), dtype=complex), np.asarray(F(ws), dtype=complex))
    points = [(complex(z), complex(w)) for z in zs for w in ws]
    return acc.result(points)


def energy_statistic(xs, ys) -> float:
    """2 E|X-Y| - E|X-X'| - E|Y-Y'| with all pairs averaged (zero when xs == ys)."""
    xs, ys = np.asarray(xs, dtype=complex), np.asarray(ys, dtype=complex)
    dxy = np.abs(xs[:, None] - ys[None, :]).mean()
    dxx = np.abs(xs[:, None] - xs[None, :]).mean()
    dyy = np.abs(ys[:, None] - ys[None, :]).mean()
    return float(2 * dxy - dxx - dyy)


def two_sample_energy(xs, ys, n_perm: int = 500, seed: int = 0) -> TestReport:
    """Energy distance between planar samples with a permutation p-value (1 + hits)/(n_perm + 1)."""
    xs, ys = np.asarray(xs, dtype=complex), np.asarray(ys, dtype=complex)
    n, m = len(xs), len(ys)
    if n < 50 or m < 50:
        raise ValueError("each sample needs at least 50 points")
    pooled = np.concatenate([xs, ys])
    D = np.abs(pooled[:, None] - pooled[None, :])
    row = D.sum(axis=1)
    total = row.sum()

    def stat_for(masks: np.ndarray) -> np.ndarray:
        # masks: (n+m, k) indicator of the first group
        DV = D @ masks
        sxx = np.einsum("ik,ik->k", masks, DV)
        cross = row @ masks
        syy = total - 2 * cross + sxx
        sxy = (total - sxx - syy) / 2
        return 2 * sxy / (n * m) - sxx / n**2 - syy / m**2

    first = np.zeros((n + m, 1))
    first[:n] = 1
    observed = float(stat_for(first)[0])
    if abs(observed) <= 1e-12 * total / (n + m) ** 2:
        observed = 0.0
    rng = np.random.default_rng(seed)
    masks = np.zeros((n + m, n_perm))
    for k in range(n_perm):
        masks[rng.permutation(n + m)[:n], k] = 1
    perm = stat_for(masks)
    hits = int(np.sum(perm >= observed - 1e-12 * max(1.0, abs(observed))))
    return TestReport(observed, (1 + hits) / (n_perm + 1), "energy_permutation", n, m)


def two_sample_radial_ks(xs, ys) -> TestReport:
    """Kolmogorov-Smirnov test on the moduli."""
    xs, ys = np.asarray(xs, dtype=complex), np.asarray(ys, dtype=complex)
    res = sps.ks_2samp(np.abs(xs), np.abs(ys))
    return TestReport(float(res.statistic), float(res.pvalue), "ks_radial", len(xs), len(ys))


def zero_counts_in_disk(zero_sets, radius: float) -> tuple[float, float]:
    """Mean count of zeros with |z| <= radius per set, and its standard error."""
    counts = np.array([int(np.sum(np.abs(np.asarray(z, dtype=complex)) <= radius)) for z in zero_sets])
    if len(counts) == 0:
        return 0.0, 0.0
    se = float(counts.std(ddof=1) / math.sqrt(len(counts))) if len(counts) > 1 else 0.0
    return float(counts.mean()), se
