"""
Closed-form approximation of the expected DPC-ZF sum capacity loss.

The expected loss splits into E{log2|H H^H|} and E{log2 1/gamma}. The first
comes from the non-central Wishart expected log-determinant, the second
either from a central Wishart with shifted covariance Sigma_hat or, per
stream, from the non-central chi-squared law of the ZF gain given the other
rows. Matrices are indexed per stream (LN x LN); for N = 1 that is the
L x L user matrix.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np
from scipy import linalg, special

from errors import DomainError
from special_math import LN2, central_wishart_logdet_mean, delta_m
from channel_model import UserProfile, los_steering_matrix

logger = logging.getLogger(__name__)

EIGENVALUE_MODES = ("literal", "kappa_scaled", "whitened")
LOGDET_MODES = EIGENVALUE_MODES + ("successive",)
DEFAULT_EIGENVALUE_MODE = "whitened"
CORRECTIONS = ("laplace", "digamma", "projected")

# what the harness reports as loss_analytic
DEFAULT_LOSS_MODE = "successive"
DEFAULT_CORRECTION = "projected"

Z_95 = 1.96


@dataclass
class LossEstimate:
    value: float
    method: str
    half_width_95: float = 0.0
    trials_used: int = 1

    def __post_init__(self):
        if self.method not in ("monte-carlo", "analytic"):
            raise DomainError(f"unknown estimate method '{self.method}'")
        if not self.half_width_95 >= 0:
            raise DomainError(f"half width must be >= 0, got {self.half_width_95}")
        if self.method == "monte-carlo" and self.trials_used < 2:
            raise DomainError("a Monte Carlo estimate needs at least 2 trials")

    def to_dict(self) -> dict:
        return {
            'value': self.value,
            'method': self.method,
            'half_width_95': self.half_width_95,
            'trials_used': self.trials_used,
        }


@dataclass
class WishartSpec:
    """Statistics of the composite channel H = P + Sigma^(1/2) W.

    kappa_diag is diagonal with each user's linear K-factor repeated over its
    N streams, los_gram the row Gram Hbar Hbar^H of the LOS components.
    """
    kappa_diag: np.ndarray
    los_gram: np.ndarray
    M: int

    def __post_init__(self):
        self.kappa_diag = np.atleast_2d(np.asarray(self.kappa_diag, dtype=float))
        self.los_gram = np.atleast_2d(np.asarray(self.los_gram))
        if self.kappa_diag.shape != self.los_gram.shape:
            raise DomainError(f"K-factor matrix {self.kappa_diag.shape} does not match "
                              f"LOS Gram {self.los_gram.shape}")

    @property
    def streams(self) -> int:
        return self.kappa_diag.shape[0]

    @property
    def kappas(self) -> np.ndarray:
        return np.diag(self.kappa_diag).copy()

    @property
    def sigma(self) -> np.ndarray:
        """(kappa + I)^-1, the row covariance of the scattered part"""
        return np.diag(1.0 / (self.kappas + 1.0))

    @property
    def sigma_hat(self) -> np.ndarray:
        return sigma_hat(self.kappa_diag, self.los_gram, self.M)


def wishart_spec(profiles: Sequence[UserProfile], M: int, N: int,
                 d_over_lambda: float) -> WishartSpec:
    """WishartSpec of the channel law defined by a set of user profiles"""
    H_bar = np.vstack([los_steering_matrix(p, M, N, d_over_lambda) for p in profiles]) \
        if profiles else np.zeros((0, M), dtype=complex)
    kappas = np.repeat([p.kappa for p in profiles], N)
    return WishartSpec(kappa_diag=np.diag(kappas), los_gram=H_bar @ H_bar.conj().T, M=M)


def sigma_hat(kappa_diag: np.ndarray, los_gram: np.ndarray, M: int) -> np.ndarray:
    """(kappa + I)^-1 + (1/M) D Hbar Hbar^H D with D = sqrt(kappa (kappa + I)^-1)"""
    kappa_diag = np.atleast_2d(np.asarray(kappa_diag, dtype=float))
    los_gram = np.atleast_2d(np.asarray(los_gram))
    if kappa_diag.shape != los_gram.shape or kappa_diag.shape[0] != kappa_diag.shape[1]:
        raise DomainError(f"dimension mismatch: K-factors {kappa_diag.shape}, "
                          f"LOS Gram {los_gram.shape}")
    kappas = np.diag(kappa_diag)
    if np.any(kappas < 0):
        raise DomainError("K-factors must be >= 0")
    if not M >= 1:
        raise DomainError(f"M must be >= 1, got {M}")

    scale = np.sqrt(kappas / (kappas + 1.0))
    shift = (scale[:, None] * los_gram * scale[None, :]) / M
    return np.diag(1.0 / (kappas + 1.0)) + shift


def noncentral_eigenvalues(spec: WishartSpec, mode: str = DEFAULT_EIGENVALUE_MODE) -> np.ndarray:
    """Non-centrality eigenvalues feeding the expected log-determinant.

    literal: eigenvalues of Hbar Hbar^H.
    kappa_scaled: eigenvalues of P P^H, P = sqrt(kappa/(kappa+1)) Hbar.
    whitened: eigenvalues of sqrt(kappa) Hbar Hbar^H sqrt(kappa), the mean of
    Sigma^(-1/2) H, whose scattered part then has unit variance.
    """
    kappas = spec.kappas
    if mode == "literal":
        scale = np.ones_like(kappas)
    elif mode == "kappa_scaled":
        scale = np.sqrt(kappas / (kappas + 1.0))
    elif mode == "whitened":
        scale = np.sqrt(kappas)
    else:
        raise DomainError(f"unknown eigenvalue mode '{mode}', expected one of {EIGENVALUE_MODES}")
    gram = scale[:, None] * spec.los_gram * scale[None, :]
    return np.clip(linalg.eigvalsh(gram), 0.0, None)


def _check_dimensions(spec: WishartSpec, M: int, L: int, N: int):
    if spec.streams != L * N:
        raise DomainError(f"spec has {spec.streams} streams, expected L*N={L * N}")
    if spec.M != M:
        raise DomainError(f"spec built for M={spec.M}, called with M={M}")


def _whitened_gram(spec: WishartSpec) -> np.ndarray:
    root = np.sqrt(spec.kappas)
    return root[:, None] * spec.los_gram * root[None, :]


def residual_noncentrality(gram: np.ndarray, k: int, others: Sequence[int], M: int) -> float:
    """Expected LOS energy of whitened row k left after projecting out the rows in others.

    gram is the whitened LOS Gram sqrt(kappa) Hbar Hbar^H sqrt(kappa). Each other
    row is its LOS part plus unit-variance scatter, so the span it removes is
    averaged through the mean Gram G = gram[others, others] + M I:

        |p_k|^2 - b^H G^-1 b - |p_k|^2 tr(G^-1),   b = gram[others, k]

    Clipped at 0.
    """
    energy = float(np.real(gram[k, k]))
    others = list(others)
    if energy <= 0 or not others:
        return max(energy, 0.0)
    mean_gram = gram[np.ix_(others, others)] + M * np.eye(len(others))
    cross = gram[others, k]
    captured = float(np.real(np.vdot(cross, linalg.solve(mean_gram, cross, assume_a="pos"))))
    captured += energy * float(np.real(np.trace(linalg.inv(mean_gram))))
    return max(energy - captured, 0.0)


def _expected_log2_gain(lam: float, dof: int) -> float:
    # central limit of delta_m as lam -> 0
    if lam > 0:
        return delta_m(lam, dof)
    return float(special.digamma(dof) / LN2)


def expected_logdet_noncentral(spec: WishartSpec, M: int, L: int, N: int,
                               mode: str = DEFAULT_EIGENVALUE_MODE) -> float:
    """E{log2|H H^H|} of the non-central Wishart H H^H.

    The eigenvalue modes sum Delta_M over the non-centrality eigenvalues; the
    whitened one adds log2|Sigma| to undo the whitening. The successive mode
    writes |H H^H| as a product of Gram-Schmidt residuals, row k keeping
    M - k degrees of freedom and residual_noncentrality against rows < k.
    """
    _check_dimensions(spec, M, L, N)
    if mode not in LOGDET_MODES:
        raise DomainError(f"unknown log-determinant mode '{mode}', expected one of {LOGDET_MODES}")
    streams = L * N
    log_sigma = float(np.sum(np.log2(spec.kappas + 1.0)))
    if mode == "successive":
        if not M >= streams:
            raise DomainError(f"E{{log2|H H^H|}} needs M >= LN, got M={M}, LN={streams}")
        gram = _whitened_gram(spec)
        total = math.fsum(_expected_log2_gain(residual_noncentrality(gram, k, range(k), M), M - k)
                          for k in range(streams))
        return total - log_sigma

    eigenvalues = noncentral_eigenvalues(spec, mode)
    if eigenvalues.size < streams:
        raise DomainError(f"need {streams} eigenvalues, got {eigenvalues.size}")
    if np.any(eigenvalues <= 0):
        raise DomainError("zero non-centrality eigenvalue; the central Wishart mean "
                          "applies (central_wishart_logdet_mean)")

    total = math.fsum(delta_m(float(lam), M) for lam in eigenvalues)
    if mode == "whitened":
        total -= log_sigma
    return total


def expected_log_inv_gamma(spec: WishartSpec, M: int, L: int, N: int,
                           correction: str = DEFAULT_CORRECTION) -> float:
    """E{log2 1/gamma} summed over the LN streams.

    laplace: central Wishart with shifted covariance Sigma_hat,
        sum of log2((Sigma_hat^-1)_kk / (M - LN)).
    digamma: same model with the exact central mean,
        sum of log2 (Sigma_hat^-1)_kk - psi(M - LN + 1)/ln 2.
    projected: gamma_k = |Pi_k h_k|^2 with Pi_k of rank M - LN + 1 is a scaled
        non-central chi-squared given the other rows, so each stream adds
        log2(1 + kappa_k) - Delta_{M-LN+1}(residual_noncentrality against all
        other rows).
    """
    _check_dimensions(spec, M, L, N)
    streams = L * N
    if not M > streams:
        raise DomainError(f"E{{log2 1/gamma}} needs M > LN, got M={M}, LN={streams}")
    if correction not in CORRECTIONS:
        raise DomainError(f"unknown correction '{correction}', expected one of {CORRECTIONS}")

    if correction == "projected":
        gram = _whitened_gram(spec)
        dof = M - streams + 1
        kappas = spec.kappas
        total = 0.0
        for k in range(streams):
            others = [j for j in range(streams) if j != k]
            lam = residual_noncentrality(gram, k, others, M)
            total += math.log2(1.0 + kappas[k]) - _expected_log2_gain(lam, dof)
        return total

    inverse_diag = np.real(np.diag(linalg.inv(spec.sigma_hat)))
    if correction == "laplace":
        return float(np.sum(np.log2(inverse_diag / (M - streams))))
    return float(np.sum(np.log2(inverse_diag)) - streams * special.digamma(M - streams + 1) / LN2)


def expected_loss_dpc_zf_analytic(spec: WishartSpec, M: int, L: int, N: int,
                                  mode: str = DEFAULT_LOSS_MODE,
                                  correction: str = DEFAULT_CORRECTION) -> LossEstimate:
    """E{log2 1/gamma} + E{log2|H H^H|}; all-Rayleigh users use the central mean"""
    if L == 0:
        return LossEstimate(value=0.0, method="analytic")
    inverse_term = expected_log_inv_gamma(spec, M, L, N, correction)
    if np.all(spec.kappas == 0):
        logdet_term = central_wishart_logdet_mean(M, L * N)
    else:
        logdet_term = expected_logdet_noncentral(spec, M, L, N, mode)
    return LossEstimate(value=inverse_term + logdet_term, method="analytic")


def ensemble_expected_loss(profile_sets: Iterable[Sequence[UserProfile]], M: int, N: int,
                           d_over_lambda: float, mode: str = DEFAULT_LOSS_MODE,
                           correction: str = DEFAULT_CORRECTION) -> LossEstimate:
    """Closed form averaged over random draws of angles and K-factors"""
    values: List[float] = []
    for profiles in profile_sets:
        spec = wishart_spec(profiles, M, N, d_over_lambda)
        estimate = expected_loss_dpc_zf_analytic(spec, M, len(profiles), N, mode, correction)
        values.append(estimate.value)
    if not values:
        raise DomainError("ensemble_expected_loss needs at least one profile set")
    logger.debug(f"ensemble_expected_loss: {len(values)} draws, M={M}, N={N}, mode={mode}, correction={correction}")
    return LossEstimate(value=math.fsum(values) / len(values), method="analytic",
                        trials_used=len(values))


def monte_carlo_estimate(samples: Sequence[float]) -> LossEstimate:
    """Sample mean of per-draw losses with its 95% normal-approximation half width"""
    values = np.asarray(samples, dtype=float)
    n = values.size
    if n < 2:
        raise DomainError(f"a Monte Carlo estimate needs at least 2 samples, got {n}")
    mean = math.fsum(values) / n
    variance = math.fsum((values - mean) ** 2) / (n - 1)
    return LossEstimate(value=mean, method="monte-carlo",
                        half_width_95=Z_95 * math.sqrt(variance / n), trials_used=n)
