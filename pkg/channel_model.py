"""
Heterogeneous Ricean channel generation.

Each user block is H_l = sqrt(k/(k+1)) Hbar_l + sqrt(1/(k+1)) Htilde_l with a
rank-one ULA line-of-sight part Hbar_l and i.i.d. CN(0, 1) scattering, stacked
into the LN x M composite channel H.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def trial_generator(seed: int, trial: int) -> np.random.Generator:
    """Counter-based substream for one Monte Carlo trial.

    The Philox key is derived from (seed, trial) only, so a trial draws the
    same numbers whichever worker runs it.
    """
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(trial)])
    return np.random.Generator(np.random.Philox(sequence))


@dataclass
class SystemConfig:
    M: int
    L: int
    N: int = 1
    d_over_lambda: float = 0.5
    snr_grid_db: Tuple[float, ...] = (0.0, 10.0, 20.0, 30.0)
    cell_radius_m: float = 100.0
    carrier_ghz: float = 3.7
    seed: int = 2024
    weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)
        if self.weights is not None:
            self.weights = tuple(float(w) for w in self.weights)

    @property
    def streams(self) -> int:
        return self.L * self.N

    @property
    def wavelength_m(self) -> float:
        return 299_792_458.0 / (self.carrier_ghz * 1e9)

    def user_weights(self) -> Tuple[float, ...]:
        if self.weights is None:
            return tuple(1.0 / self.L for _ in range(self.L)) if self.L > 0 else ()
        return self.weights

    def violations(self) -> List[str]:
        """Every broken invariant, as human readable messages"""
        problems = []
        for name in ("M", "L", "N"):
            value = getattr(self, name)
            if not float(value).is_integer() or value < 1:
                problems.append(f"system.{name} must be a positive integer (got {value})")
        if not problems and self.M < self.L * self.N:
            problems.append(f"system.M >= L*N violated: M={self.M} < L*N={self.L * self.N}")
        if not self.d_over_lambda > 0:
            problems.append(f"system.d_over_lambda must be > 0 (got {self.d_over_lambda})")
        if not self.snr_grid_db:
            problems.append("system.snr_db must list at least one SNR point")
        if not all(math.isfinite(s) for s in self.snr_grid_db):
            problems.append("system.snr_db entries must be finite")
        if not self.cell_radius_m > 0:
            problems.append(f"system.cell_radius_m must be > 0 (got {self.cell_radius_m})")
        if not 0 <= self.seed < 2 ** 64:
            problems.append(f"system.seed must be an unsigned 64-bit integer (got {self.seed})")
        if self.weights is not None:
            if len(self.weights) != self.L:
                problems.append(f"users.weights has {len(self.weights)} entries, expected L={self.L}")
            if any(not 0.0 <= w <= 1.0 for w in self.weights):
                problems.append("users.weights entries must lie in [0, 1]")
            if abs(math.fsum(self.weights) - 1.0) > WEIGHT_TOLERANCE:
                problems.append(f"users.weights must sum to 1 (sum is {math.fsum(self.weights):.12g})")
        return problems

    def validate(self) -> "SystemConfig":
        problems = self.violations()
        if problems:
            raise ConfigurationError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data["snr_grid_db"] = list(self.snr_grid_db)
        data["weights"] = list(self.user_weights())
        return data


@dataclass
class UserProfile:
    kappa_db: float
    aod_rad: float
    aoa_rad: float = 0.0
    weight: float = 0.0

    @property
    def kappa(self) -> float:
        """Linear K-factor; -inf dB is Rayleigh fading"""
        if self.kappa_db == -math.inf:
            return 0.0
        return db_to_linear(self.kappa_db)


@dataclass(frozen=True)
class KappaLaw:
    """Distribution of per-user K-factors.

    kind is "fixed" (every user at value_db) or "lognormal" (kappa_db drawn
    from a Gaussian in the dB domain with mean_db and variance var_db).
    pinned_db fixes individual users regardless of kind (None = not pinned).
    """
    kind: str = "fixed"
    value_db: float = -math.inf
    mean_db: float = 9.0
    var_db: float = 5.0
    pinned_db: Tuple[Optional[float], ...] = field(default_factory=tuple)

    @classmethod
    def fixed(cls, value_db: float) -> "KappaLaw":
        return cls(kind="fixed", value_db=float(value_db))

    @classmethod
    def rayleigh(cls) -> "KappaLaw":
        return cls(kind="fixed", value_db=-math.inf)

    @classmethod
    def lognormal(cls, mean_db: float, var_db: float) -> "KappaLaw":
        return cls(kind="lognormal", mean_db=float(mean_db), var_db=float(var_db))

    def violations(self) -> List[str]:
        problems = []
        if self.kind not in ("fixed", "lognormal"):
            problems.append(f"kappa.law must be fixed, lognormal or rayleigh (got {self.kind})")
        if self.kind == "lognormal" and not self.var_db >= 0:
            problems.append(f"kappa.variance must be >= 0 (got {self.var_db})")
        return problems

    def describe(self) -> str:
        if self.kind == "lognormal":
            text = f"lognormal({self.mean_db:g} dB, {self.var_db:g})"
        elif self.value_db == -math.inf:
            text = "rayleigh"
        else:
            text = f"fixed({self.value_db:g} dB)"
        if any(p is not None for p in self.pinned_db):
            text += " pinned=" + ",".join("-" if p is None else f"{p:g}" for p in self.pinned_db)
        return text


@dataclass
class ChannelRealization:
    H: np.ndarray
    H_bar: np.ndarray
    N: int
    kappas: np.ndarray

    @property
    def L(self) -> int:
        return self.H.shape[0] // self.N

    @property
    def M(self) -> int:
        return self.H.shape[1]

    @property
    def per_user_blocks(self) -> List[np.ndarray]:
        return split_blocks(self.H, self.N)

    @property
    def los_blocks(self) -> List[np.ndarray]:
        return split_blocks(self.H_bar, self.N)


def split_blocks(H: np.ndarray, N: int) -> List[np.ndarray]:
    """N x M views of the per-user blocks of a composite channel"""
    if N < 1 or H.shape[0] % N:
        raise ConfigurationError(f"{H.shape[0]} rows cannot be grouped into blocks of N={N}")
    return [H[i:i + N] for i in range(0, H.shape[0], N)]


def _steering_vector(angle_rad: float, size: int, d_over_lambda: float) -> np.ndarray:
    index = np.arange(size)
    return np.exp(-2j * np.pi * d_over_lambda * index * np.sin(angle_rad))


def los_steering_matrix(profile: UserProfile, M: int, N: int, d_over_lambda: float) -> np.ndarray:
    """Rank-one N x M LOS block a_rx(aoa) a_tx(aod)^H with unit-modulus entries"""
    if M < 1 or N < 1:
        raise DomainError(f"steering matrix needs M, N >= 1 (got M={M}, N={N})")
    a_tx = _steering_vector(profile.aod_rad, M, d_over_lambda)
    a_rx = _steering_vector(profile.aoa_rad, N, d_over_lambda)
    return np.outer(a_rx, a_tx.conj())


def draw_user_profiles(config: SystemConfig, kappa_law: KappaLaw,
                       rng: np.random.Generator) -> List[UserProfile]:
    """Draw L user profiles: K-factors from the law, angles uniform on [0, 2π)"""
    if kappa_law.kind == "lognormal" and kappa_law.var_db < 0:
        raise DomainError(f"K-factor variance must be >= 0 (got {kappa_law.var_db})")
    if kappa_law.kind not in ("fixed", "lognormal"):
        raise DomainError(f"unknown K-factor law '{kappa_law.kind}'")

    L = config.L
    if kappa_law.kind == "lognormal":
        kappas_db = rng.normal(kappa_law.mean_db, math.sqrt(kappa_law.var_db), size=L)
    else:
        kappas_db = np.full(L, kappa_law.value_db)
    for index, pinned in enumerate(kappa_law.pinned_db[:L]):
        if pinned is not None:
            kappas_db[index] = pinned

    aods = rng.uniform(0.0, 2.0 * np.pi, size=L)
    aoas = rng.uniform(0.0, 2.0 * np.pi, size=L)
    weights = config.user_weights()

    return [
        UserProfile(kappa_db=float(kappas_db[i]), aod_rad=float(aods[i]),
                    aoa_rad=float(aoas[i]), weight=float(weights[i]))
        for i in range(L)
    ]


def draw_channel(config: SystemConfig, profiles: Sequence[UserProfile],
                 rng: np.random.Generator) -> ChannelRealization:
    """One composite channel realization for the given user profiles"""
    if len(profiles) != config.L:
        raise ConfigurationError(f"expected {config.L} user profiles, got {len(profiles)}")

    M, N = config.M, config.N
    H_bar = np.vstack([los_steering_matrix(p, M, N, config.d_over_lambda) for p in profiles])
    scatter = (rng.standard_normal((config.L * N, M))
               + 1j * rng.standard_normal((config.L * N, M))) / np.sqrt(2.0)

    kappas = np.array([p.kappa for p in profiles])
    per_row = np.repeat(kappas, N)[:, None]
    H = np.sqrt(per_row / (per_row + 1.0)) * H_bar + np.sqrt(1.0 / (per_row + 1.0)) * scatter
    return ChannelRealization(H=H, H_bar=H_bar, N=N, kappas=kappas)


def gram_condition_number_db(H: np.ndarray) -> float:
    """Condition number of H H^H (largest over smallest eigenvalue) in dB"""
    singular_values = np.linalg.svd(H, compute_uv=False)
    if singular_values[-1] <= 0:
        return math.inf
    return float(20.0 * np.log10(singular_values[0] / singular_values[-1]))
