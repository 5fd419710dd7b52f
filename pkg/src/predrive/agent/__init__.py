from .ddqn import collate, ddqn_targets, ddqn_update, epsilon_schedule
from .qnet import QNetConfig, QNetwork, encode_stack
from .replay import ReplayBuffer, Transition
from .reward import RewardBreakdown, SvoConfig, social_reward, vehicle_reward
from .rollout import ActResult, EpisodeLog, RolloutConfig, run_episode
from .training import (GreedyController, TrainConfig, TrainController,
                       TrainResult, load_agent, save_agent, train_fleet)

__all__ = [
    "collate", "ddqn_targets", "ddqn_update", "epsilon_schedule",
    "QNetConfig", "QNetwork", "encode_stack",
    "ReplayBuffer", "Transition",
    "RewardBreakdown", "SvoConfig", "social_reward", "vehicle_reward",
    "ActResult", "EpisodeLog", "RolloutConfig", "run_episode",
    "GreedyController", "TrainConfig", "TrainController", "TrainResult",
    "load_agent", "save_agent", "train_fleet",
]
