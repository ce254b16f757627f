"""Input validation helpers shared across the package."""
import numpy as np


class LaneMatchError(ValueError):
    """Base class for errors raised on invalid lane data or configuration."""


class DegenerateLaneError(LaneMatchError):
    pass


class UndefinedIoUError(LaneMatchError):
    pass


class GridMismatchError(LaneMatchError):
    pass


class ModelIncompatibleError(LaneMatchError):
    pass


def check_same_grid(*lanes):
    grids = {lane.grid for lane in lanes}
    if len(grids) > 1:
        raise GridMismatchError("lanes are sampled on different row grids")
    return lanes[0].grid


def check_unit_interval(value, name, open_=False):
    value = float(value)
    if open_:
        ok = 0.0 < value < 1.0
    else:
        ok = 0.0 <= value <= 1.0
    if not ok or not np.isfinite(value):
        bounds = "(0, 1)" if open_ else "[0, 1]"
        raise LaneMatchError(f"{name} must lie in {bounds}, got {value}")
    return value


def check_positive(value, name):
    if not value > 0:
        raise LaneMatchError(f"{name} must be strictly positive, got {value}")
    return value


def check_features(X, n_features=None):
    """Coerce ``X`` to a finite 2-D float array of unit-interval features."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise LaneMatchError(f"expected a 2-D feature array, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ModelIncompatibleError(
            f"feature dimension {X.shape[1]} does not match model input {n_features}"
        )
    if not np.all(np.isfinite(X)):
        raise LaneMatchError("features contain non-finite values")
    return X
