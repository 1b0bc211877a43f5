"""
Special functions and matrix scalars used by the closed-form loss formulas.

Results are in bits unless a docstring says nats. Everything here is a pure
function of its arguments.
"""

import logging
import math

import numpy as np
from scipy import linalg, special, stats

from errors import DomainError, RangeError, SingularMatrixError

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)

# Largest ratio between a single term of the alternating closed form of
# delta_m and the result before the Poisson/digamma series takes over
CANCELLATION_LIMIT = 1e4

_EPS = np.finfo(float).eps
_FPMIN = np.finfo(float).tiny / _EPS
_MAX_TERMS = 10_000


def exp_integral_ei(x: float) -> float:
    """Exponential integral Ei(x); for x < 0 this is -E1(-x)."""
    if x == 0:
        raise DomainError("Ei(x) is singular at x = 0")
    value = float(special.expi(x))
    if not math.isfinite(value):
        raise RangeError(f"Ei({x}) overflows a double")
    return value


def exp_integral_ei_reference(x: float) -> float:
    """Ei(x) from power series, continued fraction and asymptotic expansion.

    Independent of scipy; kept as a cross-check for exp_integral_ei.
    Negative arguments beyond -1 use the Lentz continued fraction for E1,
    small |x| the power series, large positive x the asymptotic series.
    """
    if x == 0:
        raise DomainError("Ei(x) is singular at x = 0")
    if x > 709.0:
        raise RangeError(f"Ei({x}) overflows a double")

    if x < -1.0:
        return -_e1_continued_fraction(-x)

    if x > -math.log(_EPS):
        return _ei_asymptotic(x)

    total = 0.0
    term = 1.0
    for k in range(1, _MAX_TERMS):
        term *= x / k
        contribution = term / k
        total += contribution
        if abs(contribution) < _EPS * abs(total):
            break
    return total + np.euler_gamma + math.log(abs(x))


def _e1_continued_fraction(z: float) -> float:
    b = z + 1.0
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h * math.exp(-z)
    raise RangeError(f"E1({z}) continued fraction did not converge")


def _ei_asymptotic(x: float) -> float:
    total = 1.0
    term = 1.0
    for k in range(1, _MAX_TERMS):
        previous = term
        term *= k / x
        if term < _EPS:
            break
        if term >= previous:
            # series started diverging, drop the growing term
            total -= previous
            break
        total += term
    return math.exp(x) * total / x


def log_det_hermitian(A: np.ndarray) -> float:
    """log2|A| for a Hermitian positive-definite matrix, via Cholesky."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"log_det_hermitian needs a square matrix, got shape {A.shape}")
    scale = max(float(np.max(np.abs(A))), 1.0)
    if not np.allclose(A, A.conj().T, rtol=0.0, atol=1e-10 * scale):
        raise DomainError("log_det_hermitian needs a Hermitian matrix")

    try:
        factor = linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        min_eig = float(linalg.eigvalsh(A)[0])
        raise SingularMatrixError("matrix is not positive-definite", min_eig) from None

    diag = np.real(np.diag(factor))
    return float(2.0 * np.sum(np.log(diag)) / LN2)


def delta_m(lam: float, M: int, method: str = "auto") -> float:
    """Expected log2 of a non-central chi-squared statistic.

    E{log2 |h|^2} for h ~ CN(mu, I_M) with |mu|^2 = lam, written as

        log2(lam) + [-Ei(-lam) + sum_{k=1}^{M-1} (-1/lam)^k
                     (e^{-lam} (k-1)! - (M-1)! / (k (M-1-k)!))] / ln 2

    The bracket is evaluated in nats with log-gamma factorials. Below
    lam = M, or whenever one term of the alternating sum dwarfs the result,
    the equivalent Poisson mixture sum_j Pois(j; lam) psi(M + j) is used
    instead.

    Args:
        lam: non-centrality, must be > 0
        M: complex degrees of freedom, >= 1
        method: "auto", "closed_form" or "series"

    Returns:
        Expected value in bits
    """
    if not lam > 0:
        raise DomainError(f"delta_m needs lam > 0, got {lam}")
    if int(M) != M or M < 1:
        raise DomainError(f"delta_m needs an integer M >= 1, got {M}")
    M = int(M)

    if method == "series":
        return _delta_m_series(lam, M)
    if method not in ("auto", "closed_form"):
        raise DomainError(f"unknown delta_m method '{method}'")

    if method == "auto" and lam < M:
        return _delta_m_series(lam, M)
    result = _delta_m_closed_form(lam, M, strict=(method == "closed_form"))
    if result is None:
        logger.debug(f"delta_m(lam={lam:.4g}, M={M}): closed form cancels, using series")
        return _delta_m_series(lam, M)
    return result


def _delta_m_closed_form(lam: float, M: int, strict: bool):
    log_lam = math.log(lam)
    terms = [-exp_integral_ei(-lam)]
    magnitude = abs(terms[0])
    log_fact_m = special.gammaln(M)
    for k in range(1, M):
        log_decay = -lam + special.gammaln(k) - k * log_lam
        log_binom = log_fact_m - math.log(k) - special.gammaln(M - k) - k * log_lam
        if max(log_decay, log_binom) > 700.0:
            if strict:
                raise RangeError(f"delta_m closed form overflows for lam={lam}, M={M}")
            return None
        sign = -1.0 if k % 2 else 1.0
        decay, binom = math.exp(log_decay), math.exp(log_binom)
        magnitude = max(magnitude, decay, binom)
        terms.append(sign * (decay - binom))

    aggregate = math.fsum(terms)
    result = math.log2(lam) + aggregate / LN2
    if not strict and magnitude > CANCELLATION_LIMIT * max(abs(result), 1.0):
        return None
    return result


def _delta_m_series(lam: float, M: int) -> float:
    j_max = int(math.ceil(lam + 20.0 * math.sqrt(lam) + 40.0))
    j = np.arange(j_max + 1)
    weights = stats.poisson.pmf(j, lam)
    return float(np.sum(weights * special.digamma(M + j)) / LN2)


def central_wishart_logdet_mean(M: int, L: int) -> float:
    """E{log2|H H^H|} for an L x M matrix of i.i.d. CN(0, 1) entries."""
    if int(M) != M or int(L) != L or not M >= L >= 1:
        raise DomainError(f"central_wishart_logdet_mean needs M >= L >= 1, got M={M}, L={L}")
    k = np.arange(int(L))
    return float(np.sum(special.digamma(int(M) - k)) / LN2)
