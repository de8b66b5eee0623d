"""Energy-routed spiking process-node simulation engine."""

from .cem import (CENTER, ROUTER_OPTIONS, GoalPlane, PropagationTrace,
                  PwrTensor, SpikeEvent, transfer)
from .config import ConfigError, EngineConfig
from .functome import (ACTIONS, PREREQUISITES, ActionGene, Functome,
                       check_prerequisite, execute_action, functome_hash,
                       mutate, node_hash, scan_available_actions)
from .grid import ARCHITECTOR, TRANSMITTER, NeuralGrid, TransArchPayload
from .node import (AxonTerminal, Dendrite, GrowthCone, ProcessNode,
                   SpikeDistribution, stability_index)
from .runner import (Entity, EpochReport, InputProbe, OutputProbe,
                     develop_phase, evaluate_prune_phase, propagate_phase,
                     run_epoch, seed_entity)

__version__ = "0.1.0"
