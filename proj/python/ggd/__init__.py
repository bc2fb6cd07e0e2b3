"""Gumbel-greedy decoding for sequence-to-sequence models."""

from ggd._core import *  # noqa: F401,F403
from ggd._core import Error, ConfigError, InputError, DomainError, CheckpointError  # noqa: F401
