"""
Dagster run configurations for the scar pipeline.

Each op config names an optional config file plus the handful of values a
launchpad user typically changes; everything else comes from the file,
CHAIN_ environment variables and the library defaults.
"""
from typing import Any, Dict, List, Optional

from dagster import Config

from constrained_chain.config import RunConfig, load_config


class ChainRunConfig(Config):
    config_file: Optional[str] = None
    n_sites: List[int] = [12]
    seed: Optional[int] = None
    t_max: Optional[float] = None
    workers: Optional[int] = None
    out: str = "results"

    def overrides(self) -> Dict[str, Any]:
        return {
            "ensemble.n_sites": tuple(self.n_sites),
            "ensemble.seed": self.seed,
            "propagator.t_max": self.t_max,
            "run.workers": self.workers,
            "run.out": self.out,
        }

    def resolve(self) -> RunConfig:
        return load_config(self.config_file, self.overrides())


class SweepRunConfig(ChainRunConfig):
    mu_over_n: Optional[str] = None
    realisations: Optional[int] = None
    realisation_start: Optional[int] = None

    def overrides(self) -> Dict[str, Any]:
        values = super().overrides()
        values.update({
            "ensemble.mu_over_n": self.mu_over_n,
            "ensemble.realisations": self.realisations,
            "ensemble.realisation_start": self.realisation_start,
        })
        return values


class EnsembleSweepConfig(SweepRunConfig):
    out: str = "results/ensemble"
    threshold: Optional[float] = None

    def overrides(self) -> Dict[str, Any]:
        values = super().overrides()
        values["lls.threshold"] = self.threshold
        return values


class ThresholdSweepConfig(SweepRunConfig):
    out: str = "results/thresholds"
    thresholds: List[float] = [0.5, 0.6, 0.7]


class TliSweepConfig(SweepRunConfig):
    out: str = "results/tli"
    n_sites: List[int] = [10, 12, 14]
    mu_over_n: Optional[str] = "0.3:0.4:0.1"
    cost_tol: Optional[float] = None

    def overrides(self) -> Dict[str, Any]:
        values = super().overrides()
        values["tli.cost_tol"] = self.cost_tol
        return values


class LevelStatsConfig(SweepRunConfig):
    out: str = "results/levels"
    n_sites: List[int] = [14]


class DefectExperimentConfig(ChainRunConfig):
    out: str = "results/defect"
    site: Optional[int] = None
    strength: int = 2
    state: str = "z2"
