"""Exact solution of the non-interacting variational problem.

Conventions: ``q_k = (1/k) (4 pi beta k)^(-d/2)`` is the per-volume rate of
loops of length ``k``, the minimizer for density ``rho`` is
``m_k = q_k exp(alpha k)``, and any density above the critical density is
carried by interlacements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

DEFAULT_KMAX = 1000
_ALPHA_LO = -50.0


def free_rate(k, beta: float, d: int):
    """Per-volume Poisson rate ``(1/k)(4 pi beta k)^(-d/2)`` of k-loops."""
    if beta <= 0 or d < 1:
        raise ValueError("need beta > 0 and d >= 1")
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 1) or np.any(k_arr != np.floor(k_arr)):
        raise ValueError("loop length k must be a positive integer")
    out = (4.0 * math.pi * beta * k_arr) ** (-d / 2.0) / k_arr
    return float(out) if out.ndim == 0 else out


def _falling(s: float, j: int) -> float:
    """Coefficient of ``x^(-s-j)`` in the j-th derivative of ``x^(-s)``."""
    out = 1.0
    for i in range(j):
        out *= -(s + i)
    return out


def _derivative(n: int, x: float, s: float, alpha: float) -> float:
    """n-th derivative of ``x^(-s) exp(alpha x)`` (Leibniz rule)."""
    total = 0.0
    for j in range(n + 1):
        total += math.comb(n, j) * alpha ** (n - j) * _falling(s, j) * x ** (-s - j)
    return total * math.exp(alpha * x)


def _upper_gamma(b: float, z: float) -> float:
    """Upper incomplete gamma ``Gamma(b, z)`` for real ``b`` and ``z > 0``."""
    if b > 0:
        return float(special.gammaincc(b, z) * special.gamma(b))
    if b == 0:
        return float(special.exp1(z))
    # Gamma(b, z) = (Gamma(b+1, z) - z^b e^{-z}) / b
    return (_upper_gamma(b + 1.0, z) - z ** b * math.exp(-z)) / b


def _tail_integral(s: float, alpha: float, K: int) -> float:
    """``int_K^inf x^(-s) exp(alpha x) dx`` for ``alpha <= 0``."""
    if alpha == 0.0:
        return K ** (1.0 - s) / (s - 1.0)
    a = -alpha
    if a * K > 700:
        return 0.0
    return a ** (s - 1.0) * _upper_gamma(1.0 - s, a * K)


def exp_weighted_sum(s: float, alpha: float, K: int = DEFAULT_KMAX) -> tuple[float, float]:
    """``sum_{k>=1} k^(-s) exp(alpha k)`` for ``alpha <= 0``, with an error bound.

    The first ``K-1`` terms are summed directly and the rest by Euler-Maclaurin
    up to the third derivative.  The integrand is completely monotone, so the
    remainder is bounded by the magnitude of the next correction term.
    """
    if alpha > 0:
        raise ValueError("alpha must be <= 0")
    if alpha == 0.0 and s <= 1:
        raise ValueError(f"series diverges for s={s} <= 1")
    k = np.arange(1, K, dtype=float)
    head = float(np.sum(k ** (-s) * np.exp(alpha * k)))
    if alpha * K < -700:
        return head, 0.0
    fK = K ** (-s) * math.exp(alpha * K)
    tail = (
        _tail_integral(s, alpha, K)
        + fK / 2.0
        - _derivative(1, K, s, alpha) / 12.0
        + _derivative(3, K, s, alpha) / 720.0
    )
    err = abs(_derivative(5, K, s, alpha)) / 30240.0
    return head + tail, err


def zeta_partial(s: float, tol: float = 1e-12) -> float:
    """Riemann zeta for real ``s > 1`` with guaranteed absolute error below ``tol``."""
    if s <= 1:
        raise ValueError(f"zeta(s) diverges for s={s} <= 1")
    K = 64
    while True:
        value, err = exp_weighted_sum(s, 0.0, K)
        if err < tol:
            return value
        K *= 2
        if K > 1 << 24:
            raise RuntimeError("zeta_partial failed to reach tolerance")


def _scale(beta: float, d: int) -> float:
    return (4.0 * math.pi * beta) ** (-d / 2.0)


def rho_c(beta: float, d: int) -> float:
    """Critical density ``(4 pi beta)^(-d/2) zeta(d/2)``; ``inf`` for ``d <= 2``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if d <= 2:
        return math.inf
    return _scale(beta, d) * zeta_partial(d / 2.0)


def qbar(beta: float, d: int) -> float:
    """Total loop rate ``sum_k q_k = (4 pi beta)^(-d/2) zeta(1 + d/2)``."""
    if beta <= 0 or d < 1:
        raise ValueError("need beta > 0 and d >= 1")
    return _scale(beta, d) * zeta_partial(1.0 + d / 2.0)


def qbar_direct(beta: float, d: int, tol: float = 1e-12) -> tuple[float, float]:
    """``sum_k q_k`` by a plain partial sum with an integral-bracketed tail.

    For a decreasing summand the tail beyond ``K`` lies between the integrals
    from ``K+1`` and from ``K``; the midpoint is returned with the half-width
    of that bracket as the error bound.
    """
    if beta <= 0 or d < 1:
        raise ValueError("need beta > 0 and d >= 1")
    s = 1.0 + d / 2.0
    K = 1024
    while True:
        head = math.fsum((np.arange(1, K + 1, dtype=float) ** (-s)).tolist())
        lo = (K + 1.0) ** (1.0 - s) / (s - 1.0)
        hi = K ** (1.0 - s) / (s - 1.0)
        err = _scale(beta, d) * (hi - lo) / 2.0
        if err < tol:
            return _scale(beta, d) * (head + (lo + hi) / 2.0), err
        K *= 2
        if K > 1 << 26:
            raise RuntimeError("qbar_direct failed to reach tolerance")


def particle_density(alpha: float, beta: float, d: int) -> float:
    """``sum_k k q_k exp(alpha k)``."""
    if alpha == -math.inf:
        return 0.0
    return _scale(beta, d) * exp_weighted_sum(d / 2.0, alpha)[0]


def loop_density(alpha: float, beta: float, d: int) -> float:
    """``sum_k q_k exp(alpha k)``."""
    if alpha == -math.inf:
        return 0.0
    return _scale(beta, d) * exp_weighted_sum(1.0 + d / 2.0, alpha)[0]


@dataclass(frozen=True)
class FreeGasSolution:
    rho: float
    beta: float
    d: int
    alpha: float
    m: np.ndarray
    m_tail: float  # particle density carried by lengths beyond len(m)
    interlacement_density: float
    entropy: float
    qbar: float

    @property
    def chibar(self) -> float:
        return self.entropy

    @property
    def beta_f(self) -> float:
        return -self.qbar + self.chibar

    @property
    def loop_particle_density(self) -> float:
        return self.rho - self.interlacement_density


def solve_alpha(rho: float, beta: float, d: int, tol: float = 1e-12, kmax: int = 100) -> FreeGasSolution:
    """Find ``alpha <= 0`` with ``sum_k k q_k e^(alpha k) = min(rho, rho_c)``.

    ``tol`` is the target absolute residual in density.  ``m`` is stored for
    ``k <= kmax`` and the remaining particle density is reported as ``m_tail``.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    rc = rho_c(beta, d)
    qb = qbar(beta, d)
    target = min(rho, rc)
    ks = np.arange(1, kmax + 1)
    q = free_rate(ks, beta, d)

    if target == 0.0:
        return FreeGasSolution(rho, beta, d, -math.inf, np.zeros(kmax), 0.0, rho, qb, qb)

    if rho >= rc:
        alpha = 0.0
    else:
        def resid(a):
            return particle_density(a, beta, d) - target

        lo = _ALPHA_LO
        while resid(lo) > 0:
            lo *= 2.0
        hi = 0.0
        if math.isinf(rc):
            hi = -1e-3
            while resid(hi) < 0:
                hi /= 2.0
        alpha = optimize.brentq(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        if abs(resid(alpha)) > tol:
            # brentq stops on alpha; polish on the density residual if needed
            alpha = optimize.newton(resid, alpha, fprime=lambda a: _scale(beta, d) * exp_weighted_sum(d / 2.0 - 1.0, a)[0])
    m = q * np.exp(alpha * ks)
    m_tail = target - float(np.sum(ks * m))
    entropy = qb - loop_density(alpha, beta, d) + alpha * target
    return FreeGasSolution(rho, beta, d, alpha, m, m_tail, rho - target, max(entropy, 0.0), qb)


def entropy_sequence(m, q) -> float:
    """Relative entropy ``sum_k (q_k - m_k + m_k log(m_k/q_k))`` of two sequences."""
    m = np.asarray(m, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(m < 0) or np.any(q < 0):
        raise ValueError("sequences must be nonnegative")
    return float(np.sum(q - m + special.rel_entr(m, q)))


def chibar_free(rho: float, beta: float, d: int) -> float:
    """``inf { H(m|q) : sum_k k m_k = rho }`` for the free gas."""
    return solve_alpha(rho, beta, d).chibar


def free_energy(rho: float, beta: float, d: int) -> float:
    """``beta f(beta, rho) = -qbar + chibar(rho)`` for the free gas."""
    return solve_alpha(rho, beta, d).beta_f


def rel_entropy_discrete(mu, nu) -> float:
    """``H(mu|nu) = nu(X) - mu(X) + sum mu log(mu/nu)`` for finite measures."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError("mu and nu must share their support")
    return entropy_sequence(mu, nu)


def dual_lower_bound(samples, nu, test_functions) -> float:
    """``max_f <f, mu_hat> - log <e^f, nu>`` over the supplied test functions.

    ``samples`` are indices into the support of the probability vector ``nu``;
    each test function is either an array of values on the support or a
    callable mapping support indices to values.
    """
    samples = np.asarray(samples, dtype=np.int64)
    nu = np.asarray(nu, dtype=float)
    support = np.arange(len(nu))
    best = -math.inf
    for f in test_functions:
        vals = np.asarray(f(support) if callable(f) else f, dtype=float)
        finite = np.isfinite(vals) | (nu == 0)
        if not np.all(finite[samples]):
            continue
        with np.errstate(over="ignore"):
            log_norm = special.logsumexp(np.where(nu > 0, vals, -np.inf), b=np.where(nu > 0, nu, 1.0))
        best = max(best, float(np.mean(vals[samples])) - float(log_norm))
    return best
