"""
Monte Carlo orchestration for the capacity-loss experiments.

Every trial draws its user profiles and channel from its own counter-based
substream and evaluates all SNR points on that one realization. Results are
reduced in trial order, so a table depends only on the seed and never on
the worker count.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import CapacityLossError, ConfigurationError, ExperimentError
from channel_model import (KappaLaw, SystemConfig, db_to_linear, draw_channel,
                           draw_user_profiles, gram_condition_number_db,
                           trial_generator)
from precoding import bd_precoder_from_composite, zf_precoder
from capacity_metrics import (bd_sum_capacity, dpc_sum_capacity, loss_dpc_bd,
                              loss_dpc_zf, zf_sum_capacity)
from analytic_loss import expected_loss_dpc_zf_analytic, monte_carlo_estimate, wishart_spec
from weighted_capacity import (WeightedInstance, successive_projections,
                               weighted_asymptotic_gap, weighted_loss)

logger = logging.getLogger(__name__)

EXPERIMENTS_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'experiments.json')

METRICS = (
    'c_dpc', 'c_zf', 'c_bd', 'loss_mc', 'loss_analytic', 'weighted_gap',
    'condition_number_db', 'gap_zf', 'gap_bd', 'loss_bd_mc', 'weighted_loss',
)
WEIGHTED_METRICS = ('weighted_gap', 'weighted_loss')
DEFAULT_TRIALS = 2000
FAILURE_BUDGET = 0.01


@dataclass
class ExperimentCase:
    label: str
    config: SystemConfig
    kappa_law: KappaLaw
    outputs: Tuple[str, ...]
    fixed_channel: Optional[np.ndarray] = None
    per_trial: bool = False

    def __post_init__(self):
        self.outputs = tuple(self.outputs)

    def violations(self) -> List[str]:
        problems = [f"{self.label}: {p}" for p in self.config.violations() + self.kappa_law.violations()]
        if not self.outputs:
            problems.append(f"{self.label}: experiment.outputs must name at least one metric")
        unknown = [m for m in self.outputs if m not in METRICS]
        if unknown:
            problems.append(f"{self.label}: unknown metrics {', '.join(unknown)} "
                            f"(expected any of {', '.join(METRICS)})")
        if self.config.N != 1 and any(m in WEIGHTED_METRICS for m in self.outputs):
            problems.append(f"{self.label}: weighted metrics need single-antenna users (N = 1)")
        if self.fixed_channel is not None and self.fixed_channel.shape != (self.config.streams, self.config.M):
            problems.append(f"{self.label}: fixed channel has shape {self.fixed_channel.shape}, "
                            f"expected {(self.config.streams, self.config.M)}")
        return problems

    def to_dict(self) -> dict:
        return {
            'label': self.label,
            'system': self.config.to_dict(),
            'kappa': self.kappa_law.describe(),
            'outputs': list(self.outputs),
            'per_trial': self.per_trial,
        }


@dataclass
class Experiment:
    name: str
    trials: int
    cases: List[ExperimentCase] = field(default_factory=list)
    description: str = ''

    def violations(self) -> List[str]:
        problems = []
        if not float(self.trials).is_integer() or self.trials < 1:
            problems.append(f"experiment.trials must be a positive integer (got {self.trials})")
        if not self.cases:
            problems.append(f"experiment {self.name} has no cases")
        for case in self.cases:
            problems.extend(case.violations())
        return problems

    def validate(self) -> "Experiment":
        problems = self.violations()
        if problems:
            raise ConfigurationError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'description': self.description,
            'trials': self.trials,
            'cases': [case.to_dict() for case in self.cases],
        }


@dataclass
class ResultRow:
    experiment: str
    snr_db: float
    metric: str
    mean: float
    half_width_95: float
    trials: int
    seed: int

    def to_dict(self) -> dict:
        return {
            'experiment': self.experiment,
            'snr_db': self.snr_db,
            'metric': self.metric,
            'mean': self.mean,
            'ci95': self.half_width_95,
            'trials': self.trials,
            'seed': self.seed,
        }


def estimate_mean(samples: Sequence[float]) -> Tuple[float, float]:
    """Sample mean and 95% normal-approximation half width (0 for one sample)"""
    n = len(samples)
    if n == 0:
        return math.nan, math.nan
    if n == 1:
        return float(samples[0]), 0.0
    estimate = monte_carlo_estimate(samples)
    return estimate.value, estimate.half_width_95


def kappa_law_from_dict(data: dict) -> KappaLaw:
    law = data.get('law', 'rayleigh')
    pinned = tuple(None if p is None else float(p) for p in data.get('pinned_db', []))
    if law == 'rayleigh':
        return KappaLaw(kind='fixed', value_db=-math.inf, pinned_db=pinned)
    if law == 'fixed':
        return KappaLaw(kind='fixed', value_db=float(data['value_db']), pinned_db=pinned)
    if law == 'lognormal':
        return KappaLaw(kind='lognormal', mean_db=float(data.get('mean_db', 9.0)),
                        var_db=float(data.get('var_db', 5.0)), pinned_db=pinned)
    raise ConfigurationError(f"unknown K-factor law '{law}'")


def experiment_from_dict(data: dict, defaults: Optional[dict] = None) -> Experiment:
    """Build an Experiment from its JSON description, filling in shared defaults"""
    defaults = defaults or {}
    base_system = defaults.get('system', {})
    cases = []
    for case in data['cases']:
        system = {**base_system, **case.get('system', {})}
        config = SystemConfig(
            M=system['M'],
            L=system['L'],
            N=system.get('N', 1),
            d_over_lambda=system.get('d_over_lambda', 0.5),
            snr_grid_db=tuple(system.get('snr_db', (0.0, 10.0, 20.0, 30.0))),
            cell_radius_m=system.get('cell_radius_m', 100.0),
            carrier_ghz=system.get('carrier_ghz', 3.7),
            seed=system.get('seed', 2024),
            weights=system.get('weights'),
        )
        cases.append(ExperimentCase(
            label=case['label'],
            config=config,
            kappa_law=kappa_law_from_dict(case.get('kappa', {})),
            outputs=tuple(case.get('outputs', data.get('outputs', ()))),
            per_trial=bool(case.get('per_trial', False)),
        ))
    return Experiment(
        name=data['name'],
        trials=int(data.get('trials', defaults.get('trials', DEFAULT_TRIALS))),
        cases=cases,
        description=data.get('description', ''),
    )


def _load_config(config_path: str) -> dict:
    """Load experiment presets from JSON file"""
    with open(config_path, 'r') as f:
        return json.load(f)


def builtin_experiments(config_path: str = EXPERIMENTS_PATH) -> List[Experiment]:
    config = _load_config(config_path)
    defaults = config.get('defaults', {})
    return [experiment_from_dict(entry, defaults) for entry in config['experiments']]


def find_experiment(name: str, experiments: Optional[Sequence[Experiment]] = None) -> Optional[Experiment]:
    for experiment in experiments if experiments is not None else builtin_experiments():
        if experiment.name == name:
            return experiment
    return None


def _trial_metrics(case: ExperimentCase, seed: int, trial: int) -> Dict[str, List[float]]:
    """Every requested metric of one trial, one value per SNR point"""
    config = case.config
    rng = trial_generator(seed, trial)
    profiles = draw_user_profiles(config, case.kappa_law, rng)
    if case.fixed_channel is not None:
        H = np.asarray(case.fixed_channel, dtype=complex)
    else:
        H = draw_channel(config, profiles, rng).H

    outputs = set(case.outputs)
    rhos = [db_to_linear(s) for s in config.snr_grid_db]
    points = len(rhos)
    values: Dict[str, List[float]] = {}

    if outputs & {'c_dpc', 'gap_zf', 'gap_bd'}:
        c_dpc = [dpc_sum_capacity(H, rho, config.N) for rho in rhos]
    if outputs & {'c_zf', 'gap_zf', 'loss_mc'}:
        zf = zf_precoder(H, config.N)
        c_zf = [zf_sum_capacity(zf, rho) for rho in rhos]
    if outputs & {'c_bd', 'gap_bd', 'loss_bd_mc'}:
        bd = bd_precoder_from_composite(H, config.N)
        c_bd = [bd_sum_capacity(bd, rho) for rho in rhos]

    if 'c_dpc' in outputs:
        values['c_dpc'] = c_dpc
    if 'c_zf' in outputs:
        values['c_zf'] = c_zf
    if 'c_bd' in outputs:
        values['c_bd'] = c_bd
    if 'gap_zf' in outputs:
        values['gap_zf'] = [d - z for d, z in zip(c_dpc, c_zf)]
    if 'gap_bd' in outputs:
        values['gap_bd'] = [d - b for d, b in zip(c_dpc, c_bd)]
    if 'loss_mc' in outputs:
        values['loss_mc'] = [loss_dpc_zf(H, zf)] * points
    if 'loss_bd_mc' in outputs:
        values['loss_bd_mc'] = [loss_dpc_bd(H, bd)] * points
    if 'loss_analytic' in outputs:
        spec = wishart_spec(profiles, config.M, config.N, config.d_over_lambda)
        estimate = expected_loss_dpc_zf_analytic(spec, config.M, config.L, config.N)
        values['loss_analytic'] = [estimate.value] * points
    if 'condition_number_db' in outputs:
        values['condition_number_db'] = [gram_condition_number_db(H)] * points

    if outputs & set(WEIGHTED_METRICS):
        weights = config.user_weights()
        if 'weighted_gap' in outputs:
            values['weighted_gap'] = [
                weighted_asymptotic_gap(WeightedInstance.from_channel(H, weights, rho))
                for rho in rhos
            ]
        if 'weighted_loss' in outputs:
            instance = WeightedInstance.from_channel(H, weights, 1.0)
            projections = successive_projections(instance.H_rows)
            values['weighted_loss'] = [weighted_loss(projections, instance.weights)] * points

    return values


def _run_trial(task: Tuple[ExperimentCase, int, int]):
    """Pool worker: (values, None) on success, (None, reason) on a numerical failure"""
    case, seed, trial = task
    try:
        return _trial_metrics(case, seed, trial), None
    except (CapacityLossError, np.linalg.LinAlgError) as e:
        return None, f"{type(e).__name__}: {e}"


def _evaluate_trials(case: ExperimentCase, seed: int, trials: int, workers: int):
    tasks = [(case, seed, trial) for trial in range(trials)]
    if workers <= 1:
        return [_run_trial(task) for task in tasks]
    chunksize = max(1, trials // (workers * 4))
    with Pool(processes=workers) as pool:
        return pool.map(_run_trial, tasks, chunksize=chunksize)


def run_case(experiment_name: str, case: ExperimentCase, trials: int, seed: int,
             workers: int = 1) -> List[ResultRow]:
    """Run one case and reduce its trials, in trial order, into result rows"""
    results = _evaluate_trials(case, seed, trials, workers)

    failures = 0
    for trial, (values, reason) in enumerate(results):
        if values is None:
            failures += 1
            logger.warning(f"⚠️  {experiment_name}/{case.label} trial {trial} excluded: {reason}")
    if failures > FAILURE_BUDGET * trials:
        raise ExperimentError(f"{experiment_name}/{case.label} exceeded the failure budget",
                              failures, trials)
    if failures:
        logger.info(f"{experiment_name}/{case.label}: {failures} of {trials} trials excluded")

    kept = [(trial, values) for trial, (values, _) in enumerate(results) if values is not None]
    if case.per_trial:
        return _per_trial_rows(experiment_name, case, kept, seed)

    rows = []
    for index, snr_db in enumerate(case.config.snr_grid_db):
        for metric in case.outputs:
            mean, half_width = estimate_mean([values[metric][index] for _, values in kept])
            rows.append(ResultRow(
                experiment=f"{experiment_name}/{case.label}",
                snr_db=snr_db,
                metric=metric,
                mean=mean,
                half_width_95=half_width,
                trials=len(kept),
                seed=seed,
            ))
    return rows


def _per_trial_rows(experiment_name: str, case: ExperimentCase,
                    kept: List[Tuple[int, Dict[str, List[float]]]], seed: int) -> List[ResultRow]:
    """One row per realization, labelled <experiment>/<case>#<trial>"""
    rows = []
    for trial, values in kept:
        for index, snr_db in enumerate(case.config.snr_grid_db):
            for metric in case.outputs:
                rows.append(ResultRow(
                    experiment=f"{experiment_name}/{case.label}#{trial}",
                    snr_db=snr_db,
                    metric=metric,
                    mean=values[metric][index],
                    half_width_95=0.0,
                    trials=1,
                    seed=seed,
                ))
    return rows


def run_experiment(experiment: Experiment, workers: int = 1,
                   seed: Optional[int] = None) -> List[ResultRow]:
    """Run every case of an experiment.

    Args:
        experiment: validated Experiment
        workers: number of worker processes (1 runs in-process)
        seed: overrides the per-case system.seed

    Returns:
        Result rows ordered by case, SNR point and metric
    """
    experiment.validate()
    logger.info("=" * 80)
    logger.info(f"Starting experiment {experiment.name} at {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    logger.info(f"{len(experiment.cases)} case(s), {experiment.trials} trials each, {workers} worker(s)")
    logger.info("=" * 80)

    rows: List[ResultRow] = []
    for case in experiment.cases:
        case_seed = case.config.seed if seed is None else seed
        logger.info(f"🔄 {experiment.name}/{case.label}: M={case.config.M}, L={case.config.L}, "
                    f"N={case.config.N}, kappa {case.kappa_law.describe()}, seed {case_seed}")
        rows.extend(run_case(experiment.name, case, experiment.trials, case_seed, workers))

    logger.info("=" * 80)
    logger.info(f"✅ Completed experiment {experiment.name}: {len(rows)} rows")
    logger.info("=" * 80)
    return rows
