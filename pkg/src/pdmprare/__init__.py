"""Rare event simulation for piecewise deterministic Markov processes."""

__version__ = "0.1.0"

from .core import (DegenerateRecordError, FlowDomainError, JumpRecord,
                   ModelValidationError, PdmpModel, State, SurvivalRecord,
                   TrajectorySkeleton, TransitionTable, UndefinedKernelError,
                   preponderant_extension, propagate, sample_jump_time,
                   simulate, validate_model)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .memorization import DifferentiationDraw, sample_avoiding_extension, sample_differentiation_time
from .potentials import PotentialSpec
from .samplers import (EstimateReport, MethodConfig, ParticleSummary,
                       constant_one, failure_indicator, ips_run, ipsm_run,
                       monte_carlo_estimate, replicated_experiment, run_once,
                       smc_run)
from .streams import Stream
from .systems import (ColdStandbyModel, ColdStandbyParams, DamModel, DamParams,
                      HeatedRoomModel, HeatedRoomParams, make_system)

__all__ = [name for name in dir() if not name.startswith("_")]
