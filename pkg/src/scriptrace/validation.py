"""Input validation helpers used at public entry points."""

import numpy as np

from .exceptions import DimensionMismatchError


def check_gray_image(img):
    """Return ``img`` as a 2-D ``uint8`` array.

    Float images in ``[0, 1]`` are rescaled; anything else is clipped to
    ``[0, 255]``.
    """
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("image is empty")
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype == bool:
        return np.where(arr, 0, 255).astype(np.uint8)
    if np.issubdtype(arr.dtype, np.floating) and arr.max(initial=0) <= 1.0:
        arr = arr * 255.0
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


def check_binary_image(img):
    """Return ``img`` as a 2-D boolean ink mask (True = ink)."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D binary image, got shape {arr.shape}")
    if arr.dtype != bool:
        arr = arr != 0
    return arr


def check_vector_pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"vectors have different dimensions: {a.size} != {b.size}"
        )
    return a, b


def check_feature_matrix(X, n_features=None):
    """Validate a 2-D finite float matrix, optionally of known width."""
    try:
        X = np.asarray(X, dtype=float)
    except ValueError as exc:
        raise DimensionMismatchError(f"ragged feature vectors: {exc}") from exc
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D feature matrix, got {X.ndim}-D")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatchError(
            f"expected {n_features} features per vector, got {X.shape[1]}"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains NaN or infinite values")
    return X
