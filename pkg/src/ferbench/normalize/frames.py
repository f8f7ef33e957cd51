"""Frame sampling for video datasets."""

from __future__ import annotations

from ..errors import SamplingError

NEUTRAL_PLUS_APEX = "neutral_plus_apex"
UNIFORM_FIVE = "uniform_five"
PASSTHROUGH = "passthrough"
STRATEGIES = (NEUTRAL_PLUS_APEX, UNIFORM_FIVE, PASSTHROUGH)

_EMITTED = {NEUTRAL_PLUS_APEX: 3, UNIFORM_FIVE: 5, PASSTHROUGH: 0}


def emitted_count(strategy: str) -> int:
    try:
        return _EMITTED[strategy]
    except KeyError:
        raise ValueError(f"unknown sampling strategy {strategy!r}") from None


def _round_half_up(num: int, den: int) -> int:
    # floor(num/den + 1/2) in exact integer arithmetic
    return (2 * num + den) // (2 * den)


def sample_frames(frame_count: int, strategy: str, video: str = "<video>") -> list[int]:
    """Return the frame indices to keep from a clip of ``frame_count`` frames."""
    need = emitted_count(strategy)
    if strategy == PASSTHROUGH:
        return []
    if frame_count < need:
        raise SamplingError(
            f"video {video!r} has {frame_count} frames, {strategy} needs at least {need}"
        )
    last = frame_count - 1
    if strategy == UNIFORM_FIVE:
        return [_round_half_up(i * last, 4) for i in range(5)]
    # neutral_plus_apex: onset, 75% of the clip, final frame.
    # With exactly 3 frames the 75% point rounds onto the last one; keep indices distinct.
    apex = min(_round_half_up(3 * last, 4), last - 1)
    return [0, apex, last]


def frame_roles(strategy: str) -> list[str]:
    """Which sampled frames carry the neutral label vs. the clip's target label."""
    if strategy == NEUTRAL_PLUS_APEX:
        return ["neutral", "target", "target"]
    return ["target"] * emitted_count(strategy)
