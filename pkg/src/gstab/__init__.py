"""Causal consistency for partially replicated key-value stores via global stabilization."""
from .kernels import COMPILED
from .topology import (
    AugmentedShareGraph,
    TopologyError,
    TopologySpec,
    build_graph,
    compute_L,
    compute_O,
    compute_R,
    compute_R_i,
    key_classes,
    ring_spec,
)
from .protocol import INF, ClientState, Server, Version
from .migration import GroupConfig, MigratingClientState, MigratingServer
from .simnet import ClockConfig, NetConfig, ServerOptions, Step, TimerConfig, WorkloadConfig, run
from .trace import Event, Trace

__version__ = "0.1.0"
from .checker import (
    Report,
    Schedule,
    adversarial_schedules,
    calibration_schedules,
    check_trace,
    minimal_inflation,
    run_schedule,
)
from .harness import ExperimentConfig, compare_modes, emit_csv, emit_json, random_scenario, run_experiment
