"""Input checks shared by the estimators and the public operations."""

from __future__ import annotations

import numpy as np

from .targets import DomainError, Target

__all__ = ["check_chart_points", "check_positive", "check_unit_vectors", "check_section",
           "check_random_state"]


def check_chart_points(points, target: Target | None = None, *, name: str = "points") -> np.ndarray:
    """Return ``points`` as a float array of shape ``(..., 4)``; optionally check the chart."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != 4:
        raise ValueError(f"{name} must have a trailing axis of length 4, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if target is not None:
        target.check_domain(arr)
    return arr


def check_positive(value, name: str) -> float:
    v = float(value)
    if not v > 0 or not np.isfinite(v):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return v


def check_unit_vectors(x, *, name: str = "x", tol: float = 1e-12) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != 3:
        raise ValueError(f"{name} must have a trailing axis of length 3")
    err = np.abs(np.linalg.norm(arr, axis=-1) - 1.0)
    if np.any(err > tol):
        raise ValueError(f"{name} is not unit length (max deviation {err.max():.2e})")
    return arr


def check_section(section, *, tear_threshold: float | None = None):
    """Validate chart containment and absence of tearing; returns the section."""
    from .fields3d import Section3

    if not isinstance(section, Section3):
        raise TypeError(f"expected a Section3, got {type(section).__name__}")
    section.target.check_domain(section.values)
    if tear_threshold is not None:
        jump = section.max_neighbour_jump()
        if jump > tear_threshold:
            raise DomainError(f"section tears: neighbour jump {jump:.3g} exceeds {tear_threshold:g}")
    return section


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
