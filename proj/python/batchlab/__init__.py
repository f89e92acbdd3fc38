"""Batched robot-learning environments, benchmarks and population-based training.

Configs are plain dicts with the same schema as the JSON config files.
"""

import json

import numpy as np

from ._batchlab import (
    CSV_HEADER,
    WORKFLOW_CSV_HEADER,
    ConfigError,
    DivergenceError,
    Error,
    InvalidArgument,
    CheckpointError,
    NoisyQuadratic,
    Trainable,
    compare_workflows,
    has_direct_variant,
    measure_fps,
    pbt_decide,
    run_population,
)
from . import _batchlab

__all__ = [
    "CSV_HEADER",
    "WORKFLOW_CSV_HEADER",
    "CheckpointError",
    "ConfigError",
    "DivergenceError",
    "Env",
    "Error",
    "InvalidArgument",
    "NoisyQuadratic",
    "Trainable",
    "compare_workflows",
    "has_direct_variant",
    "load_config",
    "measure_fps",
    "pbt_decide",
    "reference_config",
    "run_population",
]


def reference_config(task, env_count, seed=0):
    """Reference config dict for "cartpole", "hopper" or "reacher"."""
    return json.loads(_batchlab.reference_config(task, env_count, seed))


def load_config(path):
    """Reads, validates and normalizes a JSON config file."""
    with open(path, encoding="utf-8") as f:
        return json.loads(_batchlab.normalize_config(f.read()))


class Env:
    """A batch of environments stepped in lockstep.

    ``reset`` and ``step`` return dicts with ``observations`` (group -> array
    of shape (env_count, dim)), ``reward``, ``terminated``, ``truncated`` and
    ``extras``.
    """

    def __init__(self, config, workflow="manager"):
        self._native = _batchlab.NativeEnv(json.dumps(config), workflow)

    @classmethod
    def from_task(cls, task, env_count, seed=0, workflow="manager"):
        return cls(reference_config(task, env_count, seed), workflow)

    @property
    def env_count(self):
        return self._native.env_count

    @property
    def action_dim(self):
        return self._native.action_dim

    @property
    def env_dt(self):
        return self._native.env_dt

    def episode_steps(self, env):
        return self._native.episode_steps(env)

    def reset(self, env_ids=None):
        ids = None if env_ids is None else [int(i) for i in env_ids]
        return _as_arrays(self._native.reset(ids))

    def step(self, actions):
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.env_count, self.action_dim):
            raise ValueError(
                f"actions must have shape ({self.env_count}, {self.action_dim}), got {actions.shape}"
            )
        return _as_arrays(self._native.step(actions))


def _as_arrays(result):
    result["terminated"] = np.asarray(result["terminated"], dtype=bool)
    result["truncated"] = np.asarray(result["truncated"], dtype=bool)
    return result
