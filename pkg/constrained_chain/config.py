"""
Run configuration.

Values are resolved with the precedence

    command-line flags > CHAIN_<SECTION>__<KEY> environment variables
    > config file > defaults

The config file holds plain `section.key = value` lines (comments with #)
and is read with python-dotenv, as is a project .env. Unknown keys and
unparsable values are collected and reported together.
"""
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional, Tuple

from dotenv import dotenv_values

from constrained_chain.ensemble_config import Boundary
from constrained_chain.errors import ConfigError
from constrained_chain.lls import LLSCriterion
from constrained_chain.propagator import METHODS, TimeGrid, default_t_max
from constrained_chain.sweep import SweepSettings

logger = logging.getLogger(__name__)

ENV_PREFIX = "CHAIN_"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class EnsembleSection:
    epsilon: int = 1
    min_range: int = 1
    boundary: str = Boundary.PERIODIC.value
    seed: int = 0
    realisations: int = 100
    realisation_start: int = 0
    mu_over_n: str = "0.05:0.5:0.025"
    n_sites: Tuple[int, ...] = (12,)


@dataclass(frozen=True)
class SectorSection:
    max_dimension: int = 2_000_000
    exhaustive_limit: int = 20
    cache_dir: Optional[str] = None


@dataclass(frozen=True)
class PropagatorSection:
    dt: float = 0.05
    t_max: Optional[float] = None
    dense_limit: int = 4096
    krylov_dim: int = 30
    substep_tol: float = 1e-10
    method: str = "auto"


@dataclass(frozen=True)
class LLSSection:
    threshold: float = 0.5
    min_crossings: int = 3
    candidate_cap: int = 50_000


@dataclass(frozen=True)
class TliSection:
    cost_tol: float = 0.01
    breakdown_tol: float = 1e-10


@dataclass(frozen=True)
class SpectralSection:
    degeneracy_tol: float = 1e-8
    central_fraction: float = 1.0


@dataclass(frozen=True)
class RunSection:
    workers: int = 1
    out: str = "results"
    log_level: str = "INFO"


SECTIONS = {
    "ensemble": EnsembleSection,
    "sector": SectorSection,
    "propagator": PropagatorSection,
    "lls": LLSSection,
    "tli": TliSection,
    "spectral": SpectralSection,
    "run": RunSection,
}


def _parse_int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in str(text).split(",") if part.strip())


def _optional(parser):
    def parse(text):
        if text is None or str(text).strip() == "":
            return None
        return parser(text)
    return parse


_PARSERS = {
    int: lambda text: int(str(text).strip()),
    float: lambda text: float(str(text).strip()),
    str: lambda text: str(text).strip(),
    Optional[float]: _optional(lambda text: float(str(text).strip())),
    Optional[str]: _optional(lambda text: str(text).strip()),
    Tuple[int, ...]: _parse_int_list,
}


@dataclass(frozen=True)
class RunConfig:
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    sector: SectorSection = field(default_factory=SectorSection)
    propagator: PropagatorSection = field(default_factory=PropagatorSection)
    lls: LLSSection = field(default_factory=LLSSection)
    tli: TliSection = field(default_factory=TliSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    run: RunSection = field(default_factory=RunSection)

    def snapshot(self) -> Dict[str, Dict[str, Any]]:
        """JSON-ready copy of every resolved value, for manifests."""
        data = asdict(self)
        data["ensemble"]["n_sites"] = list(self.ensemble.n_sites)
        return data

    def grid_for(self, n_sites: int) -> TimeGrid:
        t_max = self.propagator.t_max
        return TimeGrid(t_max if t_max is not None else default_t_max(n_sites), self.propagator.dt)

    def criterion(self) -> LLSCriterion:
        return LLSCriterion(self.lls.threshold, self.lls.min_crossings)

    def sweep_settings(self) -> SweepSettings:
        return SweepSettings(
            epsilon=self.ensemble.epsilon,
            min_range=self.ensemble.min_range,
            boundary=self.ensemble.boundary,
            seed=self.ensemble.seed,
            realisation_start=self.ensemble.realisation_start,
            candidate_cap=self.lls.candidate_cap,
            method=self.propagator.method,
            dense_limit=self.propagator.dense_limit,
            krylov_dim=self.propagator.krylov_dim,
            substep_tol=self.propagator.substep_tol,
            breakdown_tol=self.tli.breakdown_tol,
            max_dimension=self.sector.max_dimension,
            cache_dir=self.sector.cache_dir,
            workers=self.run.workers,
        )


def _file_values(path: Optional[str], problems: List[str]) -> Dict[str, str]:
    if not path:
        return {}
    if not os.path.isfile(path):
        problems.append(f"config file {path!r} does not exist")
        return {}
    return {key.strip().lower(): ("" if value is None else value)
            for key, value in dotenv_values(path).items()}


def _env_values(environ: Mapping[str, str]) -> Dict[str, str]:
    values = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        if rest == "log_level":
            values["run.log_level"] = value
        elif "__" in rest:
            section, key = rest.split("__", 1)
            values[f"{section}.{key}"] = value
    return values


def _validate(config: RunConfig, problems: List[str]) -> None:
    e, p, r = config.ensemble, config.propagator, config.run
    if e.boundary not in {b.value for b in Boundary}:
        problems.append(f"ensemble.boundary={e.boundary!r} is not periodic or open")
    if e.epsilon < 0:
        problems.append(f"ensemble.epsilon={e.epsilon} must be non-negative")
    if e.min_range < 0:
        problems.append(f"ensemble.min_range={e.min_range} must be non-negative")
    if e.realisations < 1:
        problems.append(f"ensemble.realisations={e.realisations} must be at least 1")
    if e.realisation_start < 0:
        problems.append(f"ensemble.realisation_start={e.realisation_start} must be non-negative")
    if not e.n_sites or min(e.n_sites) < 2:
        problems.append(f"ensemble.n_sites={list(e.n_sites)} needs chains of at least 2 sites")
    if p.dt <= 0:
        problems.append(f"propagator.dt={p.dt} must be positive")
    if p.t_max is not None and p.t_max < 0:
        problems.append(f"propagator.t_max={p.t_max} must be non-negative")
    if p.method not in METHODS:
        problems.append(f"propagator.method={p.method!r} is not one of {', '.join(METHODS)}")
    if p.krylov_dim < 1 or p.dense_limit < 1:
        problems.append("propagator.krylov_dim and propagator.dense_limit must be positive")
    if not 0.0 < config.lls.threshold < 1.0:
        problems.append(f"lls.threshold={config.lls.threshold} must lie in (0, 1)")
    if config.lls.min_crossings < 1:
        problems.append(f"lls.min_crossings={config.lls.min_crossings} must be at least 1")
    if config.lls.candidate_cap < 1:
        problems.append(f"lls.candidate_cap={config.lls.candidate_cap} must be positive")
    if config.tli.cost_tol <= 0:
        problems.append(f"tli.cost_tol={config.tli.cost_tol} must be positive")
    if config.tli.breakdown_tol <= 0:
        problems.append(f"tli.breakdown_tol={config.tli.breakdown_tol} must be positive")
    if config.sector.exhaustive_limit < 2:
        problems.append(f"sector.exhaustive_limit={config.sector.exhaustive_limit} must be at least 2")
    if not 0.0 < config.spectral.central_fraction <= 1.0:
        problems.append(
            f"spectral.central_fraction={config.spectral.central_fraction} must lie in (0, 1]"
        )
    if r.workers < 1:
        problems.append(f"run.workers={r.workers} must be at least 1")
    if r.log_level.upper() not in LOG_LEVELS:
        problems.append(f"run.log_level={r.log_level!r} is not a logging level")


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Resolve the run configuration.

    Args:
        path: Optional config file of `section.key = value` lines
        overrides: Command-line values keyed by "section.key"; None entries
            mean the flag was not given
        environ: Environment to read CHAIN_ variables from (os.environ by default)

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: Listing every unknown key and invalid value
    """
    problems: List[str] = []
    file_values = _file_values(path, problems)
    env_values = _env_values(os.environ if environ is None else environ)
    flag_values = {k: v for k, v in (overrides or {}).items() if v is not None}

    layered: Dict[str, Any] = {}
    for source, values in (("file", file_values), ("environment", env_values), ("flag", flag_values)):
        for key, value in values.items():
            section, _, name = key.partition(".")
            known = SECTIONS.get(section)
            if known is None or name not in {f.name for f in fields(known)}:
                problems.append(f"unknown key {key!r} from {source}")
                continue
            if source == "flag" and key in layered and str(layered[key]) != str(value):
                logger.warning(f"{key}: flag value {value!r} overrides {layered[key]!r}")
            layered[key] = value

    sections = {}
    for section, cls in SECTIONS.items():
        kwargs = {}
        for f in fields(cls):
            key = f"{section}.{f.name}"
            if key not in layered:
                continue
            value = layered[key]
            if isinstance(value, (list, tuple)) and f.type == Tuple[int, ...]:
                kwargs[f.name] = tuple(int(v) for v in value)
                continue
            try:
                kwargs[f.name] = _PARSERS[f.type](value)
            except (TypeError, ValueError):
                problems.append(f"{key}={value!r} is not a valid {getattr(f.type, '__name__', f.type)}")
        sections[section] = cls(**kwargs)

    config = RunConfig(**sections)
    _validate(config, problems)
    if problems:
        raise ConfigError(problems)
    return config
