"""Double-DQN update rule.

Action selection for the bootstrap uses the online network, evaluation uses
the target network; absorbing transitions (terminals and vetoed unsafe
proposals) regress straight onto the reward. The update works with any net
exposing ``forward``/``backward``/``params`` over either plain arrays or
tuples of arrays, so the same code trains the traffic agents and the tiny
nets used in unit tests.
"""
from __future__ import annotations

import numpy as np

from predrive.nn.adam import Adam

from .replay import Transition


def epsilon_schedule(step: int, decay_steps: int, start: float = 1.0,
                     end: float = 0.05) -> float:
    """Linear anneal from ``start`` to ``end`` over ``decay_steps``."""
    if decay_steps <= 0:
        return end
    frac = min(max(step / decay_steps, 0.0), 1.0)
    return start + (end - start) * frac


def _stack(states: list) -> np.ndarray | tuple[np.ndarray, ...]:
    if isinstance(states[0], tuple):
        return tuple(np.stack([s[i] for s in states])
                     for i in range(len(states[0])))
    return np.stack(states)


def collate(batch: list[Transition]):
    """Batch tensors for :func:`ddqn_update`.

    Absorbing rows reuse their own state as a placeholder next state; the
    mask removes their bootstrap term.
    """
    states = _stack([tr.state for tr in batch])
    actions = np.array([tr.action for tr in batch], dtype=np.int64)
    rewards = np.array([tr.reward for tr in batch], dtype=np.float64)
    next_states = _stack([tr.state if tr.next_state is None else tr.next_state
                          for tr in batch])
    absorbing = np.array([tr.next_state is None or tr.terminal
                          for tr in batch], dtype=bool)
    return states, actions, rewards, next_states, absorbing


def ddqn_targets(online, target, rewards: np.ndarray, next_states,
                 absorbing: np.ndarray, gamma: float) -> np.ndarray:
    a_star = np.argmax(online.forward(next_states), axis=1)
    q_next = target.forward(next_states)
    boot = q_next[np.arange(len(a_star)), a_star]
    return rewards + gamma * boot * (~absorbing)


def ddqn_update(online, target, batch: list[Transition], gamma: float,
                optimizer: Adam) -> float:
    """One gradient step on the TD(0) squared error; returns the loss.

    The online net's caches are overwritten by the target computation, so
    the training forward pass deliberately happens last.
    """
    states, actions, rewards, next_states, absorbing = collate(batch)
    y = ddqn_targets(online, target, rewards, next_states, absorbing, gamma)
    q = online.forward(states)
    b = len(batch)
    rows = np.arange(b)
    td = q[rows, actions] - y
    d_q = np.zeros_like(q)
    d_q[rows, actions] = 2.0 * td / b
    grad = online.backward(d_q)
    optimizer.step(online.params, grad)
    return float(np.mean(td * td))
