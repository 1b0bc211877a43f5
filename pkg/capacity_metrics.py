"""
Per-realization sum capacities and high-SNR capacity losses.

DPC is solved on the dual multiple-access channel with sum-power iterative
waterfilling; ZF and BD waterfill over their parallel channels. The affine
forms use alpha = LN (log2 rho - log2 LN).
"""

import logging
import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from scipy import linalg

from errors import ConvergenceError, DomainError
from special_math import log_det_hermitian
from channel_model import split_blocks
from precoding import (PrecoderSet, _waterfill, bd_precoder_from_composite,
                       zf_precoder)

logger = logging.getLogger(__name__)

DPC_TOLERANCE = 1e-8
DPC_MAX_ITERATIONS = 10_000


@dataclass
class CapacityReport:
    rho: float
    c_dpc: float
    c_zf: float
    affine_dpc: float
    affine_zf: float
    loss_dpc_zf: float
    c_bd: Optional[float] = None
    affine_bd: Optional[float] = None
    loss_dpc_bd: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def affine_offset(streams: int, rho: float) -> float:
    """alpha = LN [log2 rho - log2 LN]"""
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    return streams * (math.log2(rho) - math.log2(streams))


def _row_space_channel(H: np.ndarray) -> np.ndarray:
    """LN x r channel with the same Gram matrix H H^H, r = rank space size.

    H^H = Q R gives H = R^H Q^H, and log|I + sum H_l^H Q_l H_l| only depends
    on H through R^H.
    """
    _, R = linalg.qr(H.conj().T, mode="economic")
    return R.conj().T


def _dual_mac_objective(blocks, covariances) -> float:
    size = blocks[0].shape[1]
    total = np.eye(size, dtype=complex)
    for A, Q in zip(blocks, covariances):
        total += A.conj().T @ Q @ A
    return log_det_hermitian(total)


def dpc_sum_capacity(H: np.ndarray, rho: float, N: int = 1,
                     tolerance: float = DPC_TOLERANCE,
                     max_iterations: int = DPC_MAX_ITERATIONS) -> float:
    """DPC sum capacity through the dual MAC.

    Sum-power iterative waterfilling with averaging of the covariance
    updates, started from the asymptotically optimal Q_l = rho/LN I.

    Args:
        H: LN x M composite channel
        rho: total transmit power (linear SNR)
        N: receive antennas per user

    Returns:
        Sum capacity in bits/s/Hz
    """
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    reduced = _row_space_channel(np.asarray(H))
    blocks = split_blocks(reduced, N)
    L = len(blocks)
    covariances = [np.eye(N, dtype=complex) * (rho / (L * N)) for _ in range(L)]
    objective = _dual_mac_objective(blocks, covariances)

    for iteration in range(1, max_iterations + 1):
        size = reduced.shape[1]
        aggregate = np.eye(size, dtype=complex)
        for A, Q in zip(blocks, covariances):
            aggregate += A.conj().T @ Q @ A

        eigvecs, gains = [], []
        for A, Q in zip(blocks, covariances):
            interference = aggregate - A.conj().T @ Q @ A
            values, vectors = linalg.eigh(interference)
            inv_sqrt = (vectors / np.sqrt(values)) @ vectors.conj().T
            effective = A @ inv_sqrt
            mode_gains, mode_vectors = linalg.eigh(effective @ effective.conj().T)
            eigvecs.append(mode_vectors)
            gains.append(np.clip(mode_gains, 0.0, None))

        allocation = _waterfill(np.concatenate(gains), rho)
        updated = []
        for index in range(L):
            powers = allocation.powers[index * N:(index + 1) * N]
            vectors = eigvecs[index]
            fresh = (vectors * powers) @ vectors.conj().T
            updated.append(fresh / L + covariances[index] * ((L - 1) / L))
        covariances = updated

        previous = objective
        objective = _dual_mac_objective(blocks, covariances)
        if abs(objective - previous) < tolerance:
            logger.debug(f"dual MAC waterfilling converged in {iteration} iterations")
            return objective

    raise ConvergenceError("dual MAC waterfilling did not converge", objective, max_iterations)


def point_to_point_capacity(H: np.ndarray, rho: float) -> float:
    """Waterfilled capacity of a single-user MIMO channel H"""
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    singular_values = linalg.svd(np.asarray(H), compute_uv=False)
    gains = singular_values ** 2
    return _waterfill(gains, rho).capacity(gains)


def dpc_affine(H: np.ndarray, rho: float) -> float:
    """LN [log2 rho - log2 LN] + log2|H H^H|"""
    H = np.asarray(H)
    return affine_offset(H.shape[0], rho) + log_det_hermitian(H @ H.conj().T)


def zf_sum_capacity(precoders: PrecoderSet, rho: float) -> float:
    gains = precoders.channel_gains()
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    return _waterfill(gains, rho).capacity(gains)


def zf_affine(precoders: PrecoderSet, rho: float) -> float:
    gains = precoders.channel_gains()
    if np.any(gains <= 0):
        raise DomainError("ZF affine form needs positive equivalent gains")
    return affine_offset(gains.size, rho) + float(np.sum(np.log2(gains)))


def bd_sum_capacity(precoders: PrecoderSet, rho: float) -> float:
    """Joint waterfilling over the eigenmodes of every G_l^H G_l"""
    return zf_sum_capacity(precoders, rho)


def bd_affine(precoders: PrecoderSet, rho: float) -> float:
    """alpha + log2 prod_l |G_l^H G_l|"""
    streams = precoders.streams
    log_dets = sum(log_det_hermitian(G.conj().T @ G) for G in precoders.equivalent_channels)
    return affine_offset(streams, rho) + log_dets


def loss_dpc_zf(H: np.ndarray, precoders: PrecoderSet) -> float:
    """log2(|H H^H| / prod |g_{l,n}|^2), the high-SNR DPC-ZF gap"""
    H = np.asarray(H)
    gains = precoders.channel_gains()
    if np.any(gains <= 0):
        raise DomainError("ZF loss needs positive equivalent gains")
    return log_det_hermitian(H @ H.conj().T) - float(np.sum(np.log2(gains)))


def loss_dpc_bd(H: np.ndarray, precoders: PrecoderSet) -> float:
    """log2(|H H^H| / prod_l |G_l^H G_l|), the high-SNR DPC-BD gap"""
    H = np.asarray(H)
    log_dets = sum(log_det_hermitian(G.conj().T @ G) for G in precoders.equivalent_channels)
    return log_det_hermitian(H @ H.conj().T) - log_dets


def capacity_report(H: np.ndarray, N: int, rho: float) -> CapacityReport:
    """Every capacity, affine form and loss of one realization at one SNR.

    ZF always treats each receive antenna as its own stream; BD fields are
    filled in when N > 1.
    """
    H = np.asarray(H)
    zf = zf_precoder(H, N)
    report = CapacityReport(
        rho=rho,
        c_dpc=dpc_sum_capacity(H, rho, N),
        c_zf=zf_sum_capacity(zf, rho),
        affine_dpc=dpc_affine(H, rho),
        affine_zf=zf_affine(zf, rho),
        loss_dpc_zf=loss_dpc_zf(H, zf),
    )
    if N > 1:
        bd = bd_precoder_from_composite(H, N)
        report.c_bd = bd_sum_capacity(bd, rho)
        report.affine_bd = bd_affine(bd, rho)
        report.loss_dpc_bd = loss_dpc_bd(H, bd)
    return report
