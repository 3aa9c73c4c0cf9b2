"""Error metrics comparing reduced trajectories against the full model."""

from __future__ import annotations

import numpy as np

__all__ = ["relative_error_series", "rmse_final", "trajectory_errors"]


def relative_error_series(full: np.ndarray, rom: np.ndarray) -> float:
    """Mean over snapshots of the columnwise relative 2-norm error.

    Both arguments are n-by-nt matrices whose columns align in time.
    """
    if full.shape != rom.shape:
        raise ValueError(f"shape mismatch {full.shape} vs {rom.shape}")
    norms = np.linalg.norm(full, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("full trajectory has a zero-norm column")
    errs = np.linalg.norm(full - rom, axis=0) / norms
    return float(errs.mean())


def rmse_final(full: np.ndarray, rom: np.ndarray) -> float:
    """Root mean square pointwise error between two fields."""
    full = np.asarray(full)
    rom = np.asarray(rom)
    if full.shape != rom.shape:
        raise ValueError(f"shape mismatch {full.shape} vs {rom.shape}")
    return float(np.sqrt(np.mean((full - rom) ** 2)))


def trajectory_errors(full: dict[str, np.ndarray], rom: dict[str, np.ndarray]
                      ) -> dict[str, dict[str, float]]:
    """Per-variable relative-error series and final-time RMSE."""
    out = {}
    for var in ("u", "v", "phi"):
        out[var] = {
            "relerr": relative_error_series(full[var], rom[var]),
            "rmse": rmse_final(full[var][:, -1], rom[var][:, -1]),
        }
    return out
