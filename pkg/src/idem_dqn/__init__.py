"""DQN with TD-error weighted replay and a TD-driven step size (IDEM-DQN),
a slippery FrozenLake gridworld and the experiment harness around them."""
from .agent import Agent, AgentConfig, Variant, adaptive_lr, evaluate, greedy_policy
from .env import FrozenLake, GridMap, encode_state, load_map, parse_map
from .harness import DynamicSchedule, ExperimentSpec, GridSpec, run_ablation, run_comparison, run_dynamic
from .qnet import QNetwork, adam_step, backward, forward, init_network
from .replay import Mode, ReplayBuffer, Transition, weight_of

__version__ = "0.1.0"
