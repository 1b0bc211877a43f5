"""
Weighted sum capacity for single-antenna users.

Users are encoded in descending-weight order. At high SNR the DPC weighted
sum capacity is reached by splitting power in proportion to the weights,
and the DPC/ZF comparison reduces to the norms of two projections of each
channel row: f_l against the earlier users, g_l against all other users.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from errors import ConvergenceError, DomainError, SingularMatrixError
from capacity_metrics import _row_space_channel

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12
EXACT_TOLERANCE = 1e-8
INTERIOR_SUMS = ("full", "exclusive")

_EPS = np.finfo(float).eps


@dataclass
class WeightedInstance:
    H_rows: np.ndarray
    weights: np.ndarray
    rho: float

    def __post_init__(self):
        self.H_rows = np.atleast_2d(np.asarray(self.H_rows, dtype=complex))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 1 or self.weights.size != self.H_rows.shape[0]:
            raise DomainError(f"{self.H_rows.shape[0]} channel rows but "
                              f"{self.weights.size} weights")
        if np.any(self.weights < 0):
            raise DomainError("weights must be >= 0")
        if np.any(np.diff(self.weights) > 0):
            raise DomainError(f"weights must be sorted descending, got {self.weights.tolist()}")
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_TOLERANCE:
            raise DomainError(f"weights must sum to 1, sum is {math.fsum(self.weights):.12g}")
        if not self.rho > 0:
            raise DomainError(f"rho must be > 0, got {self.rho}")

    @property
    def L(self) -> int:
        return self.H_rows.shape[0]

    @classmethod
    def from_channel(cls, H: np.ndarray, weights: Sequence[float], rho: float) -> "WeightedInstance":
        """Reorder users by descending weight (stable) and build the instance"""
        weights = np.asarray(weights, dtype=float)
        order = np.argsort(-weights, kind="stable")
        return cls(H_rows=np.asarray(H)[order], weights=weights[order], rho=rho)


@dataclass
class ProjectionSet:
    f: np.ndarray
    g: np.ndarray
    norms_sq_f: np.ndarray
    norms_sq_g: np.ndarray

    @property
    def L(self) -> int:
        return self.f.shape[0]


def successive_projections(H_rows: np.ndarray) -> ProjectionSet:
    """Residuals of every row against its predecessors (f) and against all other rows (g).

    f comes from the QR factorization of H^H: column l of Q R_ll is the
    Gram-Schmidt residual of h_l^H. g_l^H = w_l / ||w_l||^2 where w_l is
    column l of the right pseudo-inverse.
    """
    H = np.atleast_2d(np.asarray(H_rows, dtype=complex))
    L, M = H.shape
    if L > M:
        raise SingularMatrixError(f"{L} rows in dimension {M} cannot be independent", 0.0)

    Q, R = linalg.qr(H.conj().T, mode="economic")
    diag = np.diag(R)
    threshold = max(H.shape) * _EPS * max(float(np.max(np.abs(diag))), _EPS)
    if np.any(np.abs(diag) <= threshold):
        raise SingularMatrixError("channel rows are linearly dependent",
                                  float(np.min(np.abs(diag))))

    f = (Q * diag).conj().T
    f[0] = H[0]
    norms_sq_f = np.abs(diag) ** 2
    norms_sq_f[0] = float(np.real(np.vdot(H[0], H[0])))

    pseudo_inverse = linalg.pinv(H)
    w_norms_sq = np.sum(np.abs(pseudo_inverse) ** 2, axis=0)
    g = (pseudo_inverse / w_norms_sq).conj().T
    norms_sq_g = 1.0 / w_norms_sq

    return ProjectionSet(f=f, g=g, norms_sq_f=norms_sq_f, norms_sq_g=norms_sq_g)


def weighted_capacity_at(instance: WeightedInstance, powers: Sequence[float]) -> float:
    """Weighted DPC objective sum mu_l log2(1 + rho_l h_l (S^(l-1))^-1 h_l^H).

    S^(l-1) = I + sum_{j<l} rho_j h_j^H h_j. Evaluated in the L-dimensional
    row space of H, which leaves every quadratic form unchanged.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.shape != (instance.L,):
        raise DomainError(f"expected {instance.L} powers, got shape {powers.shape}")
    rows = _row_space_channel(instance.H_rows)
    size = rows.shape[1]
    S = np.eye(size, dtype=complex)
    total = []
    for mu, p, r in zip(instance.weights, powers, rows):
        quadratic = float(np.real(np.vdot(r, linalg.solve(S, r, assume_a="pos"))))
        total.append(mu * math.log2(1.0 + max(p, 0.0) * quadratic))
        S += max(p, 0.0) * np.outer(r.conj(), r)
    return math.fsum(total)


def kkt_power_allocation(norms_sq: Sequence[float], weights: Sequence[float], rho: float,
                         interior_sum: str = "full") -> np.ndarray:
    """Weighted waterfilling for sum mu_l log2(1 + rho_l a_l).

    On the active set A, rho_l = mu_l (rho + sum_A 1/a_i) / sum_A mu - 1/a_l;
    the most negative power is dropped from A and the rest re-solved until
    every power is >= 0. interior_sum="exclusive" evaluates
    mu_l rho + mu_l sum_{i in A, i != l} 1/a_i - 1/a_l instead, whose powers
    generally do not add up to rho.

    Args:
        norms_sq: channel gains a_l, all > 0
        weights: mu_l >= 0
        rho: total power

    Returns:
        Array of L powers
    """
    a = np.asarray(norms_sq, dtype=float)
    mu = np.asarray(weights, dtype=float)
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    if a.shape != mu.shape or a.ndim != 1 or a.size == 0:
        raise DomainError(f"norms {a.shape} and weights {mu.shape} must be equal-length vectors")
    if not np.all(a > 0):
        raise DomainError("norms must be > 0")
    if np.any(mu < 0):
        raise DomainError("weights must be >= 0")
    if interior_sum not in INTERIOR_SUMS:
        raise DomainError(f"unknown interior sum '{interior_sum}', expected one of {INTERIOR_SUMS}")

    inverse = 1.0 / a
    powers = np.zeros_like(a)
    active = np.flatnonzero(mu > 0)
    while active.size:
        if interior_sum == "full":
            level = (rho + inverse[active].sum()) / mu[active].sum()
            candidate = mu[active] * level - inverse[active]
        else:
            others = inverse[active].sum() - inverse[active]
            candidate = mu[active] * rho + mu[active] * others - inverse[active]
        worst = int(np.argmin(candidate))
        if candidate[worst] >= 0:
            powers[active] = candidate
            break
        active = np.delete(active, worst)

    if interior_sum == "exclusive":
        logger.debug(f"exclusive-sum KKT powers add up to {powers.sum():.6g} of {rho:.6g}")
    return powers


def asymptotic_allocation(weights: Sequence[float], rho: float) -> np.ndarray:
    """rho_l = mu_l rho"""
    return np.asarray(weights, dtype=float) * rho


def weighted_capacity_affine(projections: ProjectionSet, weights: Sequence[float], rho: float,
                             which: str = "dpc") -> float:
    """sum mu_l log2(1 + rho mu_l ||f_l||^2), or ||g_l||^2 for which="zf" """
    mu = np.asarray(weights, dtype=float)
    if which == "dpc":
        norms = projections.norms_sq_f
    elif which == "zf":
        norms = projections.norms_sq_g
    else:
        raise DomainError(f"which must be 'dpc' or 'zf', got '{which}'")
    return float(np.sum(mu * np.log2(1.0 + rho * mu * norms)))


def weighted_loss(projections: ProjectionSet, weights: Sequence[float]) -> float:
    """sum mu_l log2(||f_l||^2 / ||g_l||^2)"""
    mu = np.asarray(weights, dtype=float)
    return float(np.sum(mu * np.log2(projections.norms_sq_f / projections.norms_sq_g)))


def weighted_zf_exact(instance: WeightedInstance) -> float:
    """ZF weighted sum capacity: decoupled weighted waterfilling over ||g_l||^2"""
    projections = successive_projections(instance.H_rows)
    powers = kkt_power_allocation(projections.norms_sq_g, instance.weights, instance.rho)
    return float(np.sum(instance.weights * np.log2(1.0 + powers * projections.norms_sq_g)))


def _starting_points(instance: WeightedInstance) -> List[np.ndarray]:
    """Power fractions: asymptotic, uniform, decoupled KKT on ||f||^2 and ||g||^2, vertices"""
    L = instance.L
    starts = [instance.weights.copy(), np.full(L, 1.0 / L)]
    projections = successive_projections(instance.H_rows)
    for norms in (projections.norms_sq_f, projections.norms_sq_g):
        starts.append(kkt_power_allocation(norms, instance.weights, instance.rho) / instance.rho)
    starts.extend(np.eye(L))
    return starts


def weighted_dpc_optimum(instance: WeightedInstance,
                         tolerance: float = EXACT_TOLERANCE) -> Tuple[float, np.ndarray]:
    """Best weighted DPC objective found and the powers achieving it.

    The objective is not jointly concave in the powers, so SLSQP runs from
    several feasible starts on the simplex and the best value wins (the
    starts themselves included).
    """
    if instance.L == 1:
        power = np.array([instance.rho])
        return weighted_capacity_at(instance, power), power

    rho = instance.rho
    L = instance.L

    def negative_objective(fractions):
        return -weighted_capacity_at(instance, np.clip(fractions, 0.0, 1.0) * rho)

    constraints = [{'type': 'eq', 'fun': lambda t: np.sum(t) - 1.0}]
    bounds = [(0.0, 1.0)] * L

    best_value, best_powers = -math.inf, None
    converged = 0
    starts = _starting_points(instance)
    for start in starts:
        start_value = -negative_objective(start)
        if start_value > best_value:
            best_value, best_powers = start_value, start * rho
        result = optimize.minimize(negative_objective, start, method="SLSQP", bounds=bounds,
                                   constraints=constraints,
                                   options={'ftol': tolerance, 'maxiter': 500})
        if not result.success:
            logger.debug(f"SLSQP from {np.round(start, 3).tolist()} stopped: {result.message}")
            continue
        converged += 1
        fractions = np.clip(result.x, 0.0, None)
        fractions /= fractions.sum()
        value = -negative_objective(fractions)
        if value > best_value:
            best_value, best_powers = value, fractions * rho

    if converged == 0:
        raise ConvergenceError("weighted DPC optimization failed from every start",
                               best_value, len(starts))
    return best_value, best_powers


def weighted_dpc_exact(instance: WeightedInstance, tolerance: float = EXACT_TOLERANCE) -> float:
    """Maximum weighted DPC sum capacity in bits"""
    value, _ = weighted_dpc_optimum(instance, tolerance)
    return value


def weighted_asymptotic_gap(instance: WeightedInstance,
                            tolerance: float = EXACT_TOLERANCE) -> float:
    """Exact weighted DPC capacity minus its value at the weight-proportional split"""
    exact = weighted_dpc_exact(instance, tolerance)
    asymptotic = weighted_capacity_at(instance, asymptotic_allocation(instance.weights, instance.rho))
    return exact - asymptotic
