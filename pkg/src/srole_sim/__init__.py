"""Simulator for shielded multi-agent RL scheduling of model-parallel DNN
training on edge clusters."""
from .actions import AssignmentAction, JointAction, Placement, joint_action
from .config import METHODS, SimConfig, parse_config
from .errors import ConfigError, ContractViolation, ProtocolError, SchedulingError, SimError
from .shield import ShieldCorrection, ShieldReport, find_alternative, shield_step, virtual_assign
from .dshield import dshield_round, elect_delegate, local_shield_pass
from .engine import estimate_training_time, pretrain, run_campaign, run_episode
from .metrics import MetricsRecord, aggregate, emit_csv, emit_figure_data, read_csv

__all__ = [
    "AssignmentAction", "JointAction", "Placement", "joint_action",
    "METHODS", "SimConfig", "parse_config",
    "ConfigError", "ContractViolation", "ProtocolError", "SchedulingError", "SimError",
    "ShieldCorrection", "ShieldReport", "find_alternative", "shield_step", "virtual_assign",
    "dshield_round", "elect_delegate", "local_shield_pass",
    "estimate_training_time", "pretrain", "run_campaign", "run_episode",
    "MetricsRecord", "aggregate", "emit_csv", "emit_figure_data", "read_csv",
]

__version__ = "0.1.0"
