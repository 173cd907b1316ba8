"""Non-negative matrix factorization and incremental non-negative projection.

The training feature matrix is factorized once in batch mode with
multiplicative updates for the squared Frobenius objective. Each online record
is then embedded by solving a small non-negative least-squares problem against
the frozen basis, so the latent space never shifts under the streaming model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

_EPS = 1e-12


@dataclass(frozen=True)
class NnmfResult:
    """Factorization output: X ~ coefficients @ basis.

    errors[k] is the squared Frobenius reconstruction error after k update
    sweeps (errors[0] is the error at initialization), kept so monotonicity
    is observable.
    """

    coefficients: np.ndarray  # n x h
    basis: np.ndarray  # h x d
    errors: np.ndarray


def _reconstruction_error(X: np.ndarray, C: np.ndarray, B: np.ndarray) -> float:
    diff = X - C @ B
    return float(np.sum(diff * diff))


def nnmf_fit(
    X: np.ndarray,
    h: int,
    max_iters: int = 500,
    tol: float = 1e-9,
    seed: int = 0,
) -> NnmfResult:
    """Factor a non-negative matrix X (n x d) into C (n x h) @ B (h x d).

    Multiplicative updates keep both factors non-negative and the squared
    Frobenius error non-increasing. Iteration stops when the relative error
    improvement falls below tol or after max_iters sweeps. Initialization is
    uniform in (0, 1] scaled by mean(X)/h, drawn from the given seed, so runs
    are reproducible.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigError("X must be a 2-d matrix")
    n, d = X.shape
    if not 1 <= h <= min(n, d):
        raise ConfigError(f"latent dimension h={h} must be in [1, min(n, d)={min(n, d)}]")
    if np.any(X < 0) or not np.all(np.isfinite(X)):
        raise DataError("X must be non-negative and finite")
    scale = float(X.mean()) / h
    if scale <= 0:
        raise DataError("X is all zeros; the factorization is degenerate")

    rng = np.random.default_rng(seed)
    # 1 - U[0, 1) lies in (0, 1]: no factor entry starts at an absorbing zero.
    C = (1.0 - rng.random((n, h))) * scale
    B = (1.0 - rng.random((h, d))) * scale

    prev = _reconstruction_error(X, C, B)
    errors = [prev]
    for _ in range(max_iters):
        C *= (X @ B.T) / (C @ (B @ B.T) + _EPS)
        B *= (C.T @ X) / ((C.T @ C) @ B + _EPS)
        err = _reconstruction_error(X, C, B)
        errors.append(err)
        if prev - err < tol * max(prev, _EPS):
            break
        prev = err
    return NnmfResult(coefficients=C, basis=B, errors=np.array(errors))


def nnls_project(
    x: np.ndarray,
    basis: np.ndarray,
    tol: float = 1e-6,
    max_iters: int = 10_000,
) -> np.ndarray:
    """Project x (d-vector) onto the basis: argmin_{c >= 0} ||x - c @ basis||^2.

    Projected gradient with a backtracking line search; stops when the KKT
    residual is within tol: every coordinate is either active (c_j <= tol with
    gradient_j >= -tol) or has |gradient_j| <= tol.
    """
    x = np.asarray(x, dtype=float)
    B = np.asarray(basis, dtype=float)
    if B.ndim != 2 or x.shape != (B.shape[1],):
        raise ConfigError(f"x of shape {x.shape} does not match basis {B.shape}")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(B)):
        raise DataError("nnls inputs must be finite")

    # The objective is a small h x h quadratic: c G c' - 2 g0.c + x.x.
    G = B @ B.T
    g0 = B @ x
    const = float(x @ x)
    c = np.zeros(B.shape[0])
    f = const
    step = 1.0
    for _ in range(max_iters):
        grad = 2.0 * (G @ c - g0)
        active_ok = (c <= tol) & (grad >= -tol)
        if np.all(active_ok | (np.abs(grad) <= tol)):
            break
        while True:
            c_new = np.maximum(c - step * grad, 0.0)
            d = c_new - c
            f_new = float(c_new @ G @ c_new - 2.0 * (g0 @ c_new) + const)
            if f_new <= f + grad @ d + (0.5 / step) * (d @ d) + 1e-15:
                break
            step *= 0.5
            if step < 1e-20:
                break
        if step < 1e-20:
            break
        c, f = c_new, f_new
        step *= 1.3  # let the step grow back after conservative stretches
    return c


def save_basis(basis: np.ndarray, path) -> None:
    """Persist the basis with full float precision for bit-identical reload."""
    B = np.asarray(basis, dtype=float)
    doc = {"h": int(B.shape[0]), "d": int(B.shape[1]), "rows": B.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_basis(path) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        B = np.array(doc["rows"], dtype=float)
        h, d = int(doc["h"]), int(doc["d"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed basis file {path}") from exc
    if B.shape != (h, d):
        raise DataError(f"basis file {path} header {h}x{d} does not match rows {B.shape}")
    return B
