"""Independent reference computations shared by several test modules."""

import math

import numpy as np
from scipy import stats


def heat_kernel_1d(x, t):
    return np.exp(-(x ** 2) / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)


def particle_survival_1d(k: int, R: float, beta: float, nodes: int = 200) -> float:
    """Probability that a closed k-step walk anchored uniformly in [-R, R) keeps every particle inside.

    Nystrom discretization of the killed transition operator with
    Gauss-Legendre nodes: ``trace(G^k) / (2R g_{k beta}(0))``.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    x, w = R * x, R * w
    G = heat_kernel_1d(x[:, None] - x[None, :], beta) * w[None, :]
    trace = float(np.trace(np.linalg.matrix_power(G, k)))
    return trace / (2.0 * R * heat_kernel_1d(0.0, k * beta))


def particle_survival(k: int, R: float, beta: float, d: int) -> float:
    """Coordinates are independent, so the d-dimensional survival is a power."""
    return particle_survival_1d(k, R, beta) ** d


def poisson_chi2_pvalue(counts_by_sample: np.ndarray, means: np.ndarray) -> float:
    """Goodness of fit of per-sample counts ``(n_samples, K)`` to independent Poisson laws.

    Uses the summed standardized squared deviations of the column means,
    which is chi-square with K degrees of freedom under the null.
    """
    n = counts_by_sample.shape[0]
    observed = counts_by_sample.mean(axis=0)
    keep = means > 0
    z2 = n * (observed[keep] - means[keep]) ** 2 / means[keep]
    return float(stats.chi2.sf(z2.sum(), keep.sum()))


def dispersion_pvalue(counts) -> float:
    """Two-sided Poisson index-of-dispersion test."""
    counts = np.asarray(counts, dtype=float)
    n = len(counts)
    mean = counts.mean()
    if mean == 0:
        return 1.0
    stat = ((counts - mean) ** 2).sum() / mean
    cdf = stats.chi2.cdf(stat, n - 1)
    return float(2.0 * min(cdf, 1.0 - cdf))
