"""
Run defaults from the environment and the plain-text experiment file format.

Experiment files hold one `section.key = value` assignment per line:

    # lognormal K-factors, M = 32
    experiment.name = fig2-m32
    experiment.trials = 500
    experiment.outputs = c_dpc, c_zf
    system.M = 32
    system.L = 8
    system.snr_db = 0 dB, 10 dB, 20 dB
    kappa.law = lognormal
    kappa.mean = 9 dB
    kappa.variance = 5
    users.weights = 0.125, 0.125, ...

`#` starts a comment, lists are comma separated and SNR or K-factor
entries may carry a `dB` suffix.
"""

import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from dotenv import load_dotenv

from errors import ConfigParseError
from channel_model import KappaLaw, SystemConfig
from sim_harness import DEFAULT_TRIALS, Experiment, ExperimentCase

logger = logging.getLogger(__name__)

SECTIONS = {
    'experiment': ('name', 'trials', 'outputs', 'label'),
    'system': ('M', 'L', 'N', 'd_over_lambda', 'snr_db', 'cell_radius_m', 'carrier_ghz', 'seed'),
    'kappa': ('law', 'value', 'mean', 'variance', 'pinned'),
    'users': ('weights',),
}
DB_KEYS = {('system', 'snr_db'), ('kappa', 'value'), ('kappa', 'mean'), ('kappa', 'pinned')}
TEXT_KEYS = {('experiment', 'name'), ('experiment', 'outputs'), ('experiment', 'label'), ('kappa', 'law')}
LIST_KEYS = {('experiment', 'outputs'), ('system', 'snr_db'), ('kappa', 'pinned'), ('users', 'weights')}

_KEY_PATTERN = re.compile(r'^([A-Za-z_]+)\.([A-Za-z_]+)$')
_DB_SUFFIX = re.compile(r'\s*dB$', re.IGNORECASE)


@dataclass
class RunSettings:
    seed: Optional[int] = None
    workers: int = 1
    output_dir: str = 'results'
    trials: Optional[int] = None
    log_level: str = 'INFO'


def load_run_settings(env_file: Optional[str] = None) -> RunSettings:
    """Run defaults from SIM_* environment variables (and a .env file, if any)"""
    load_dotenv(env_file)
    trials = os.getenv('SIM_TRIALS')
    seed = os.getenv('SIM_SEED')
    return RunSettings(
        seed=int(seed) if seed else None,
        workers=int(os.getenv('SIM_WORKERS', '1')),
        output_dir=os.getenv('SIM_OUTPUT_DIR', 'results'),
        trials=int(trials) if trials else None,
        log_level=os.getenv('LOG_LEVEL', 'INFO').upper(),
    )


@dataclass
class ParsedConfig:
    """Raw assignments of an experiment file, keyed by (section, key)"""
    values: Dict[Tuple[str, str], object] = field(default_factory=dict)
    lines: Dict[Tuple[str, str], int] = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.values.get((section, key), default)


def _parse_number(token: str, line: int, column: int, allow_db: bool) -> float:
    text = token.strip()
    if _DB_SUFFIX.search(text):
        if not allow_db:
            raise ConfigParseError(f"dB suffix not allowed here: '{text}'", line, column)
        text = _DB_SUFFIX.sub('', text)
    try:
        return float(text)
    except ValueError:
        raise ConfigParseError(f"expected a number, got '{token.strip()}'", line, column) from None


def _coerce(value: float):
    """Integral floats become ints so integer fields compare cleanly"""
    if math.isfinite(value) and value == int(value):
        return int(value)
    return value


def _parse_value(section: str, key: str, raw: str, line: int, column: int):
    if not raw.strip():
        raise ConfigParseError(f"missing value for {section}.{key}", line, column)
    allow_db = (section, key) in DB_KEYS
    lead = len(raw) - len(raw.lstrip())

    if (section, key) in LIST_KEYS:
        items, offset = [], column
        for token in raw.split(','):
            stripped = token.strip()
            item_column = offset + len(token) - len(token.lstrip())
            if not stripped:
                raise ConfigParseError(f"empty list entry in {section}.{key}", line, item_column)
            if (section, key) in TEXT_KEYS:
                items.append(stripped)
            elif (section, key) == ('kappa', 'pinned') and stripped == '-':
                items.append(None)
            else:
                items.append(_parse_number(stripped, line, item_column, allow_db))
            offset += len(token) + 1
        return items

    if (section, key) in TEXT_KEYS:
        return raw.strip()
    return _coerce(_parse_number(raw, line, column + lead, allow_db))


def parse_config_text(text: str) -> ParsedConfig:
    """Parse the `section.key = value` grammar; the first error raises ConfigParseError"""
    parsed = ParsedConfig()
    for line_number, line in enumerate(text.splitlines(), start=1):
        content = line.split('#', 1)[0]
        if not content.strip():
            continue
        if '=' not in content:
            column = len(content) - len(content.lstrip()) + 1
            raise ConfigParseError("expected 'section.key = value'", line_number, column)

        lhs, rhs = content.split('=', 1)
        key_column = len(lhs) - len(lhs.lstrip()) + 1
        match = _KEY_PATTERN.match(lhs.strip())
        if not match:
            raise ConfigParseError(f"malformed key '{lhs.strip()}'", line_number, key_column)
        section, key = match.groups()
        if section not in SECTIONS:
            raise ConfigParseError(f"unknown section '{section}'", line_number, key_column)
        if key not in SECTIONS[section]:
            raise ConfigParseError(f"unknown key '{section}.{key}'", line_number,
                                   key_column + len(section) + 1)
        if (section, key) in parsed.values:
            raise ConfigParseError(
                f"duplicate key '{section}.{key}' (first set on line {parsed.lines[(section, key)]})",
                line_number, key_column)

        parsed.values[(section, key)] = _parse_value(section, key, rhs, line_number, len(lhs) + 2)
        parsed.lines[(section, key)] = line_number
    return parsed


def _kappa_law(parsed: ParsedConfig) -> KappaLaw:
    law = parsed.get('kappa', 'law', 'rayleigh')
    pinned = tuple(parsed.get('kappa', 'pinned', ()))
    if law == 'rayleigh':
        return KappaLaw(kind='fixed', value_db=-math.inf, pinned_db=pinned)
    if law == 'fixed':
        return KappaLaw(kind='fixed', value_db=float(parsed.get('kappa', 'value', -math.inf)),
                        pinned_db=pinned)
    return KappaLaw(kind=law, mean_db=float(parsed.get('kappa', 'mean', 9.0)),
                    var_db=float(parsed.get('kappa', 'variance', 5.0)), pinned_db=pinned)


def experiment_from_parsed(parsed: ParsedConfig, default_trials: int = DEFAULT_TRIALS) -> Experiment:
    """Build an (unvalidated) single-case Experiment from parsed assignments"""
    name = parsed.get('experiment', 'name', 'custom')
    snr_grid = parsed.get('system', 'snr_db')
    weights = parsed.get('users', 'weights')
    config = SystemConfig(
        M=parsed.get('system', 'M', 0),
        L=parsed.get('system', 'L', 0),
        N=parsed.get('system', 'N', 1),
        d_over_lambda=parsed.get('system', 'd_over_lambda', 0.5),
        snr_grid_db=tuple(snr_grid) if snr_grid is not None else (0.0, 10.0, 20.0, 30.0),
        cell_radius_m=parsed.get('system', 'cell_radius_m', 100.0),
        carrier_ghz=parsed.get('system', 'carrier_ghz', 3.7),
        seed=parsed.get('system', 'seed', 2024),
        weights=tuple(weights) if weights is not None else None,
    )
    case = ExperimentCase(
        label=parsed.get('experiment', 'label', 'default'),
        config=config,
        kappa_law=_kappa_law(parsed),
        outputs=tuple(parsed.get('experiment', 'outputs', ('c_dpc', 'c_zf'))),
    )
    return Experiment(name=name, trials=parsed.get('experiment', 'trials', default_trials),
                      cases=[case])


def config_violations(parsed: ParsedConfig) -> List[str]:
    """Every invariant a parsed experiment file breaks"""
    problems = []
    for key in ('M', 'L'):
        if ('system', key) not in parsed.values:
            problems.append(f"system.{key} is required")
    if problems:
        return problems
    return experiment_from_parsed(parsed).violations()


def load_experiment_file(path: str, default_trials: int = DEFAULT_TRIALS) -> Experiment:
    """Read, parse and validate an experiment file"""
    with open(path, 'r') as f:
        parsed = parse_config_text(f.read())
    logger.debug(f"Parsed {len(parsed.values)} assignments from {path}")
    return experiment_from_parsed(parsed, default_trials).validate()
