"""
Zero-forcing and block-diagonalization precoders plus waterfilling.

ZF nulls every other receive antenna (LN parallel scalar channels), BD only
the other users (L parallel N x N channels). Precoder columns always have
unit norm, so the allocated powers are the transmitted powers.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy import linalg

from errors import ConfigurationError, DomainError, SingularMatrixError
from channel_model import split_blocks

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass
class PrecoderSet:
    kind: str
    W: List[np.ndarray]
    gains: np.ndarray = field(default_factory=lambda: np.zeros(0))
    equivalent_channels: List[np.ndarray] = field(default_factory=list)

    @property
    def L(self) -> int:
        return len(self.W)

    @property
    def streams(self) -> int:
        return sum(w.shape[1] for w in self.W)

    def channel_gains(self) -> np.ndarray:
        """Power gains of all LN parallel channels.

        ZF: |g_{l,n}|^2. BD: eigenvalues of every G_l^H G_l.
        """
        if self.kind == "zf":
            return self.gains
        return np.concatenate([
            np.clip(linalg.eigvalsh(G.conj().T @ G), 0.0, None) for G in self.equivalent_channels
        ])


@dataclass
class PowerAllocation:
    powers: np.ndarray
    total: float
    water_level: float

    def capacity(self, gains: np.ndarray) -> float:
        """sum log2(1 + p_k g_k) in bits"""
        return float(np.sum(np.log1p(self.powers * np.asarray(gains))) / np.log(2.0))


def _rank_threshold(A: np.ndarray, sigma_max: float) -> float:
    return max(A.shape) * _EPS * sigma_max


def zf_precoder(H: np.ndarray, N: int = 1) -> PrecoderSet:
    """Normalized right pseudo-inverse of the composite channel.

    Args:
        H: LN x M composite channel
        N: receive antennas per user, only used to group the columns of W

    Returns:
        PrecoderSet with real positive equivalent gains g_{l,n} = h_{l,n} w_{l,n}
    """
    H = np.asarray(H)
    rows, M = H.shape
    if rows > M:
        raise SingularMatrixError(f"ZF needs M >= LN, got LN={rows}, M={M}", 0.0)

    U, s, Vh = linalg.svd(H, full_matrices=False)
    if s[-1] <= _rank_threshold(H, s[0]):
        raise SingularMatrixError("composite channel is rank deficient", float(s[-1]))

    pseudo_inverse = (Vh.conj().T / s) @ U.conj().T
    W_all = pseudo_inverse / np.linalg.norm(pseudo_inverse, axis=0)

    g = np.einsum("ij,ji->i", H, W_all)
    W_all = W_all * (np.conj(g) / np.abs(g))
    gains = np.abs(g) ** 2

    W = [W_all[:, i:i + N] for i in range(0, rows, N)]
    return PrecoderSet(kind="zf", W=W, gains=gains)


def bd_precoder(H_blocks: Sequence[np.ndarray]) -> PrecoderSet:
    """Block diagonalization: W_l = V_l U_l on the null space of the other users.

    V_l spans the null space of the stacked other-user channels; U_l holds the
    first N right singular vectors of H_l V_l, so G_l = H_l W_l carries the
    singular values of the effective channel.
    """
    blocks = [np.asarray(b) for b in H_blocks]
    L = len(blocks)
    if L == 0:
        return PrecoderSet(kind="bd", W=[], equivalent_channels=[])
    N, M = blocks[0].shape
    if M < L * N:
        raise ConfigurationError(f"BD needs M >= LN, got M={M}, LN={L * N}")

    W, G = [], []
    for index, H_l in enumerate(blocks):
        if L == 1:
            null_basis = np.eye(M, dtype=complex)
        else:
            others = np.vstack([b for i, b in enumerate(blocks) if i != index])
            _, s, Vh = linalg.svd(others, full_matrices=True)
            rank = int(np.sum(s > _rank_threshold(others, s[0])))
            null_basis = Vh[rank:].conj().T
        if null_basis.shape[1] < N:
            raise ConfigurationError(
                f"user {index}: null space of the other users has dimension "
                f"{null_basis.shape[1]} < N={N}")

        _, _, Vh_eff = linalg.svd(H_l @ null_basis, full_matrices=False)
        W_l = null_basis @ Vh_eff[:N].conj().T
        W.append(W_l)
        G.append(H_l @ W_l)

    return PrecoderSet(kind="bd", W=W, equivalent_channels=G)


def bd_precoder_from_composite(H: np.ndarray, N: int) -> PrecoderSet:
    return bd_precoder(split_blocks(np.asarray(H), N))


def _waterfill(gains: np.ndarray, rho: float) -> PowerAllocation:
    """Waterfilling that tolerates zero gains (they receive no power)"""
    gains = np.asarray(gains, dtype=float)
    powers = np.zeros_like(gains)
    usable = np.flatnonzero(gains > 0)
    if usable.size == 0:
        return PowerAllocation(powers=powers, total=float(rho), water_level=0.0)

    order = usable[np.argsort(gains[usable])[::-1]]
    inverse = 1.0 / gains[order]
    cumulative = np.cumsum(inverse)

    # largest active set whose water level clears the weakest active channel
    active = order.size
    while active > 1:
        level = (rho + cumulative[active - 1]) / active
        if level > inverse[active - 1]:
            break
        active -= 1
    level = (rho + cumulative[active - 1]) / active

    powers[order[:active]] = level - inverse[:active]
    np.clip(powers, 0.0, None, out=powers)
    return PowerAllocation(powers=powers, total=float(rho), water_level=float(level))


def waterfill(gains: Sequence[float], rho: float) -> PowerAllocation:
    """Optimal power split over parallel channels under a sum constraint.

    p_k = max(nu - 1/g_k, 0) with the water level nu chosen so sum(p) = rho.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.size == 0:
        raise DomainError("waterfill needs at least one channel")
    if not np.all(gains > 0):
        raise DomainError("waterfill needs strictly positive gains")
    if not rho > 0:
        raise DomainError(f"waterfill needs rho > 0, got {rho}")
    return _waterfill(gains, rho)
