from __future__ import annotations

from ..errors import TrainingError


def compute_class_weights(class_counts: dict[str, int]) -> dict[str, float]:
    """Inverse-frequency weights N / (K * n_c); a balanced split gets all ones.

    Classes with zero count are dropped since they cannot be learned.
    """
    present = {c: n for c, n in class_counts.items() if n > 0}
    if len(present) < 2:
        raise TrainingError(f"training split has {len(present)} class(es); need at least 2")
    total = sum(present.values())
    k = len(present)
    return {c: total / (k * n) for c, n in present.items()}
