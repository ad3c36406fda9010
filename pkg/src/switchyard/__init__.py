"""Busbar-switching grid operation: simulator, heuristic-gated RL controller,
and the operator what-if service."""

from .grid import (BUS_1, BUS_2, DISCONNECTED, Grid, GridValidationError,
                   LineSpec, GeneratorSpec, LoadSpec, Substation,
                   is_bridge, is_reference, reference_topology)
from .power_flow import (FlowSolution, InjectionProfile, IslandedGridError,
                         PowerFlowError, SingularMatrixError, rho_max, solve_dc)
from .actions import (Action, ActionEntry, ActionSet, DO_NOTHING, DisconnectLine,
                      DoNothing, ReconnectLine, SetSubstation, SubstationAction,
                      count_valid_topologies, enumerate_valid_topologies,
                      reduce_action_space)
from .environment import (EnvConfig, EpisodeDoneError, GridEnv, Observation,
                          StepResult, step_reward)
from .controller import (Controller, ControllerConfig, Decision,
                         reconnectable_lines, recovery_action)
from .policy import PolicyParams, featurize, load_policy, save_policy
from .ppo import PPOConfig, PrioritizedReplay, Transition, gae, ppo_update, train
from .scenario import (Chronic, ChronicProfile, MaintenanceEvent,
                       OpponentSchedule, generate_chronic, load_chronic,
                       load_grid, save_chronic, save_grid)

__version__ = "0.1.0"
