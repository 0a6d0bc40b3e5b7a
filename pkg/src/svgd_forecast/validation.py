"""Input checks for the estimator API.

Estimators accept either a WindowedDataset or a pair
``(inputs, target_calendar)`` of arrays shaped (N, C, L) and (N, d, C_cal).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class ArrayWindows:
    """Minimal dataset view consumed by the training loops."""

    inputs: np.ndarray
    target_calendar: np.ndarray
    targets: np.ndarray | None = None

    def __len__(self):
        return len(self.inputs)


def check_windows(X, y=None, require_y: bool = False, horizon: int | None = None) -> ArrayWindows:
    if hasattr(X, "inputs") and hasattr(X, "target_calendar"):
        inputs, cal = X.inputs, X.target_calendar
        if y is None:
            y = getattr(X, "targets", None)
    elif isinstance(X, (tuple, list)) and len(X) == 2:
        inputs, cal = X
    else:
        raise ContractError("X must be a WindowedDataset or an (inputs, target_calendar) pair")
    if not isinstance(inputs, np.ndarray):
        inputs = np.asarray(inputs, dtype=np.float64)
    cal = np.asarray(cal, dtype=np.float64)
    if inputs.ndim != 3:
        raise ContractError(f"inputs must be (N, C, L), got shape {inputs.shape}")
    if cal.ndim != 3 or cal.shape[0] != inputs.shape[0]:
        raise ContractError(f"target_calendar must be (N, d, C_cal) with N={inputs.shape[0]}, got {cal.shape}")
    if horizon is not None and cal.shape[1] != horizon:
        raise ContractError(f"target_calendar horizon {cal.shape[1]} does not match fitted horizon {horizon}")
    if inputs.shape[0] == 0:
        raise ContractError("no windows supplied")
    if not (np.isfinite(inputs).all() and np.isfinite(cal).all()):
        raise ContractError("inputs contain non-finite values")
    if y is not None:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != cal.shape[:2]:
            raise ContractError(f"targets must be (N, d) = {cal.shape[:2]}, got {y.shape}")
        if not np.isfinite(y).all():
            raise ContractError("targets contain non-finite values")
    elif require_y:
        raise ContractError("targets are required")
    return ArrayWindows(inputs, cal, y)
