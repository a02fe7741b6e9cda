"""Message-conditioned builder policies and the models fitted to them.

A policy maps (observation, message) to a distribution over the six
actions.  The same network shape serves two roles: the builder's own
policy and the guide's cloned model of the builder.  Messages are plain
integers in [0, vocab_size); the network input is the observation
concatenated with the message's one-hot encoding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import Action, ConfigurationError, GridConfig, observe
from . import nets
from .nets import MlpParams

N_ACTIONS = len(Action)
VOCAB_MIN = 2
VOCAB_MAX = 72
DEFAULT_HIDDEN = (126, 126)


def check_vocab(vocab_size: int):
    if not VOCAB_MIN <= vocab_size <= VOCAB_MAX:
        raise ConfigurationError(
            f"vocab_size must be in [{VOCAB_MIN}, {VOCAB_MAX}], got {vocab_size}")


@dataclass
class BcHyper:
    """Behavioral-cloning fit budget."""

    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3


@dataclass
class MessagePolicy:
    """A network over (observation ++ one-hot message) -> action probs."""

    params: MlpParams
    vocab_size: int

    @property
    def obs_dim(self) -> int:
        return self.params.in_dim - self.vocab_size

    def copy(self) -> "MessagePolicy":
        return MessagePolicy(self.params.copy(), self.vocab_size)


def init_policy(rng: np.random.Generator, config: GridConfig, vocab_size: int,
                hidden=DEFAULT_HIDDEN) -> MessagePolicy:
    check_vocab(vocab_size)
    params = nets.init_params(rng, config.obs_dim + vocab_size, N_ACTIONS, hidden)
    return MessagePolicy(params, vocab_size)


def encode_input(obs: np.ndarray, msg: int, vocab_size: int) -> np.ndarray:
    if not 0 <= msg < vocab_size:
        raise ValueError(f"message {msg} outside vocabulary of size {vocab_size}")
    x = np.zeros(len(obs) + vocab_size)
    x[: len(obs)] = obs
    x[len(obs) + msg] = 1.0
    return x


def encode_dataset(records, vocab_size: int):
    """Stack interaction records into a supervised (X, y) pair.

    Records need .obs, .msg and .action attributes.
    """
    records = list(records)
    if not records:
        raise ValueError("empty interaction dataset")
    obs_dim = len(records[0].obs)
    X = np.zeros((len(records), obs_dim + vocab_size))
    y = np.zeros(len(records), dtype=int)
    for i, rec in enumerate(records):
        X[i, :obs_dim] = rec.obs
        X[i, obs_dim + rec.msg] = 1.0
        y[i] = rec.action
    return X, y


def policy_probs(policy: MessagePolicy, obs: np.ndarray, msg: int) -> np.ndarray:
    return nets.forward_probs(policy.params, encode_input(obs, msg, policy.vocab_size))


def sample_from_probs(probs: np.ndarray, rng: np.random.Generator) -> int:
    # inverse-CDF draw; shared so cached and uncached paths match bit-for-bit
    cdf = np.cumsum(probs)
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), len(probs) - 1)


def builder_act(policy: MessagePolicy, obs: np.ndarray, msg: int,
                rng: np.random.Generator = None, mode: str = "sample") -> int:
    probs = policy_probs(policy, obs, msg)
    if mode == "argmax":
        return int(np.argmax(probs))
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        return sample_from_probs(probs, rng)
    raise ValueError(f"unknown action mode {mode!r}")


def uniform_message(rng: np.random.Generator, vocab_size: int) -> int:
    return int(rng.integers(vocab_size))


def fit_builder_model(records, config: GridConfig, vocab_size: int, hyper: BcHyper,
                      rng: np.random.Generator, hidden=DEFAULT_HIDDEN):
    """Clone observed behavior into a freshly initialized network.

    The model is re-initialized on every call: the data it is fitted to
    was collected from scratch, so no stale parameters carry over.
    Returns (model, final_epoch_loss).
    """
    check_vocab(vocab_size)
    X, y = encode_dataset(records, vocab_size)
    params = nets.init_params(rng, X.shape[1], N_ACTIONS, hidden)
    params, loss = nets.bc_fit(X, y, params, nets.init_adam(params, lr=hyper.lr),
                               hyper.epochs, hyper.batch_size, rng)
    return MessagePolicy(params, vocab_size), loss


def self_imitate(policy: MessagePolicy, records, hyper: BcHyper, rng: np.random.Generator):
    """Refit the policy on its own guided behavior, warm-starting from
    the current parameters.  The policy persists across rounds; only its
    training data is discarded.  Returns (policy, final_epoch_loss).
    """
    X, y = encode_dataset(records, policy.vocab_size)
    params = policy.params.copy()
    params, loss = nets.bc_fit(X, y, params, nets.init_adam(params, lr=hyper.lr),
                               hyper.epochs, hyper.batch_size, rng)
    return MessagePolicy(params, policy.vocab_size), loss


class FrozenPolicyCache:
    """Memoized lookups for a policy that is not being trained.

    Within a collection round or an evaluation the acting policy is
    frozen, so (state core, message) keys the forward pass exactly.
    Caching it makes tree search affordable on one core.
    """

    def __init__(self, policy: MessagePolicy, config: GridConfig):
        self.policy = policy
        self.config = config
        self.vocab_size = policy.vocab_size
        self._table = {}

    def _entry(self, state, msg: int):
        key = (state.core(), msg)
        hit = self._table.get(key)
        if hit is None:
            probs = policy_probs(self.policy, observe(state, self.config), msg)
            hit = (probs, np.cumsum(probs), int(np.argmax(probs)))
            self._table[key] = hit
        return hit

    def probs(self, state, msg: int) -> np.ndarray:
        return self._entry(state, msg)[0]

    def sample(self, state, msg: int, rng: np.random.Generator) -> int:
        cdf = self._entry(state, msg)[1]
        return min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)

    def argmax(self, state, msg: int) -> int:
        return self._entry(state, msg)[2]

    def __len__(self) -> int:
        return len(self._table)


class RandomBuilder:
    """Acts uniformly at random; the untrained lower bound."""

    def __init__(self, vocab_size: int):
        check_vocab(vocab_size)
        self.vocab_size = vocab_size

    def act(self, obs, msg, rng: np.random.Generator, mode: str = "sample") -> int:
        # mode is accepted for interface parity; random is random either way
        return int(rng.integers(N_ACTIONS))
