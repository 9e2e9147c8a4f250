"""
Utility functions for coopsync.

This module provides helper functions for:
- Exact frame arithmetic between microsecond clocks and sampling rates
- Seeded construction of torch modules
- Validation of channel and shape configuration
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from fractions import Fraction
from typing import Iterator

import torch

from . import constants as const
from .exceptions import ConfigError, ShapeError


def _exact_hz(frequency_hz: float) -> Fraction:
    # str() keeps decimal literals like 12.5 exact
    return Fraction(str(frequency_hz))


def frames_behind(delay_us: int, frequency_hz: float) -> int:
    """
    Whole frames covered by a delay, rounding fractional frames up.

    Args:
        delay_us: Delay in microseconds (>= 0)
        frequency_hz: Sampling frequency of the delayed agent

    Returns:
        ceil(delay * frequency), computed exactly

    Raises:
        ConfigError: If the delay is negative

    Examples:
        >>> frames_behind(400_000, 10.0)
        4
        >>> frames_behind(250_000, 10.0)
        3
    """
    if delay_us < 0:
        raise ConfigError("Delay must be non-negative", f"{delay_us}us", field="latency")
    return math.ceil(Fraction(int(delay_us), const.US_PER_SECOND) * _exact_hz(frequency_hz))


def trajectory_length(delay_us: int, frequency_hz: float, capacity: int) -> int:
    """
    Number of trajectory samples for an object seen over a full cache.

    Examples:
        >>> trajectory_length(400_000, 10.0, 4)
        8
    """
    return frames_behind(delay_us, frequency_hz) + capacity


def period_us(frequency_hz: float) -> int:
    return int(round(const.US_PER_SECOND / frequency_hz))


def frame_age(reference_us: int, timestamp_us: int, frequency_hz: float) -> int:
    """Frames between ``timestamp_us`` and a later ``reference_us``, rounded up."""
    return frames_behind(reference_us - timestamp_us, frequency_hz)


@contextmanager
def seeded(seed: int) -> Iterator[None]:
    """Run a block under a fixed torch seed without touching the global RNG state."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


def check_even(channels: int, name: str = "channels") -> int:
    if channels <= 0 or channels % 2:
        raise ConfigError("Channel count must be a positive even number", f"{name}={channels}", field=name)
    return channels


def check_divisible(height: int, width: int, factor: int, what: str) -> None:
    if height % factor or width % factor:
        raise ShapeError(
            f"{what} needs spatial size divisible by {factor}",
            expected=f"multiples of {factor}",
            actual=(height, width),
        )


def check_heads(channels: int, heads: int) -> int:
    """Per-head width; heads must split the channels evenly."""
    if heads <= 0 or channels % heads:
        raise ConfigError("Heads must divide channels", f"C={channels}, heads={heads}", field="heads")
    return channels // heads
