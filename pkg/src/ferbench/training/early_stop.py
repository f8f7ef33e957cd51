from __future__ import annotations

CONTINUE = "continue"
STOP = "stop"

_EPS = 1e-12


def early_stop_decision(val_accuracy_history, min_delta: float = 0.01, patience: int = 5,
                        max_epochs: int | None = None) -> str:
    """Decide after the last epoch in ``val_accuracy_history`` whether to go on.

    An epoch improves when its accuracy is at least the running best so far
    plus ``min_delta`` (absolute). Training stops after ``patience``
    consecutive non-improving epochs, or once ``max_epochs`` are done.
    """
    history = list(val_accuracy_history)
    if not history:
        raise ValueError("empty validation history")
    if max_epochs is not None and len(history) >= max_epochs:
        return STOP
    best = history[0]
    stale = 0
    for acc in history[1:]:
        if acc >= best + min_delta - _EPS:
            stale = 0
        else:
            stale += 1
        best = max(best, acc)
    return STOP if stale >= patience else CONTINUE
