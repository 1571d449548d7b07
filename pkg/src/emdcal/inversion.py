"""Regularized reconstruction and residuals.

Tikhonov:  minimize ||L v - b||^2 + lam ||C v||^2  (normal equations, direct solve)
TV:        minimize ||L v - b||^2 + lam ||C v||_1  (split Bregman)
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .emd_solver import EmdConfig, structure
from .errors import InnerSolveFailure, InputError, SingularSystem
from .grid_core import FluxField, GridFn, discrete_gradient_matrix, norm_l1, norm_l2


@dataclass(frozen=True)
class InversionConfig:
    regularizer: str = "tv"
    lam: float = 10.0
    bregman_mu: float = 100.0
    bregman_iters: int = 10
    inner_tol: float = 1e-8
    inner_max_iter: int | None = None  # defaults to 10 * n
    sweeps: int = 1  # alternating u/d updates per Bregman pass

    def __post_init__(self):
        if self.regularizer not in ("tv", "tikhonov"):
            raise InputError(f"unknown regularizer {self.regularizer!r}")
        if not (self.lam > 0 and self.bregman_mu > 0 and self.inner_tol > 0):
            raise InputError("lam, bregman_mu and inner_tol must be positive")
        if self.bregman_iters < 1 or self.sweeps < 1:
            raise InputError("bregman_iters and sweeps must be at least 1")


def _check(L, C, b):
    b = np.asarray(getattr(b, "data", b), dtype=float)
    if L.shape[1] != C.shape[1]:
        raise InputError(f"L has {L.shape[1]} columns but C has {C.shape[1]}")
    if b.size != L.shape[0]:
        raise InputError(f"data has {b.size} entries but L has {L.shape[0]} rows")
    return sp.csr_matrix(L), sp.csr_matrix(C), b


def solve_tikhonov(L, C, b, lam: float) -> np.ndarray:
    """Minimizer of ``||L v - b||^2 + lam ||C v||^2``."""
    L, C, b = _check(L, C, b)
    A = (L.T @ L + lam * (C.T @ C)).tocsc()
    rhs = L.T @ b
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            u = spla.spsolve(A, rhs)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SingularSystem(f"normal equations are singular: {exc}") from exc
    u = np.atleast_1d(u)
    if not np.all(np.isfinite(u)):
        raise SingularSystem("normal equations are singular")
    return u


def tv_objective(L, C, b, lam: float, u) -> float:
    r = L @ u - b
    return float(r @ r + lam * np.sum(np.abs(C @ u)))


def _shrink(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def solve_tv(L, C, b, cfg: InversionConfig = InversionConfig(), trace: list | None = None) -> np.ndarray:
    """Split Bregman for ``||L v - b||^2 + lam ||C v||_1``.

    The auxiliary ``d ~ C v`` enters through ``mu ||d - C v - e||^2``, so the
    ``v`` update solves ``(L^T L + mu C^T C) v = L^T b + mu C^T (d - e)`` and the
    ``d`` update is soft thresholding at ``lam / (2 mu)``. If ``trace`` is a
    list, the split objective after each half step is appended to it as
    ``(pass, value)``.
    """
    L, C, b = _check(L, C, b)
    mu = cfg.bregman_mu
    n = L.shape[1]
    A = spla.LinearOperator((n, n), matvec=lambda v: L.T @ (L @ v) + mu * (C.T @ (C @ v)), dtype=float)
    diag = np.asarray(L.multiply(L).sum(axis=0)).ravel() + mu * np.asarray(C.multiply(C).sum(axis=0)).ravel()
    if np.any(diag <= 0):
        raise SingularSystem("a column is zero in both L and C")
    M = sp.diags(1.0 / diag)
    Ltb = L.T @ b
    maxiter = cfg.inner_max_iter or 10 * n
    u = np.zeros(n)
    d = np.zeros(C.shape[0])
    e = np.zeros(C.shape[0])
    thr = cfg.lam / (2 * mu)

    def split_obj(u, d):
        r = L @ u - b
        s = d - C @ u - e
        return float(r @ r + cfg.lam * np.sum(np.abs(d)) + mu * (s @ s))

    for k in range(cfg.bregman_iters):
        for _ in range(cfg.sweeps):
            u, info = spla.cg(A, Ltb + mu * (C.T @ (d - e)), x0=u, rtol=cfg.inner_tol, atol=0.0,
                              maxiter=maxiter, M=M)
            if info != 0:
                raise InnerSolveFailure(f"CG stopped after {info} iterations")
            if trace is not None:
                trace.append((k, split_obj(u, d)))
            d = _shrink(C @ u + e, thr)
            if trace is not None:
                trace.append((k, split_obj(u, d)))
        e = e + C @ u - d
    return u


@dataclass(frozen=True, eq=False)
class ResidualReport:
    residual: GridFn
    reconstruction: GridFn
    struc_value: float
    l1_value: float
    l2_value: float
    flux: FluxField | None = None
    emd_converged: bool = True
    emd_iterations: int = 0


def reconstruct(L, b, cfg: InversionConfig, nx: int) -> np.ndarray:
    """Reconstruct on an ``nx`` by ``nx`` grid over the unit square.

    The penalties are discretizations of continuum norms of the gradient:
    ``lam * integral |grad v|`` for TV and ``lam * integral |grad v|^2`` for
    Tikhonov, so the gradient matrix is weighted by the cell area (TV) or its
    square root (Tikhonov).
    """
    h = 1.0 / nx
    C = discrete_gradient_matrix(nx, nx, h, h)
    if cfg.regularizer == "tikhonov":
        return solve_tikhonov(L, h * C, b, cfg.lam)
    return solve_tv(L, (h * h) * C, b, cfg)


def residual(L_theta, b_noisy: GridFn, cfg: InversionConfig = InversionConfig(),
             emd_cfg: EmdConfig = EmdConfig(), nx: int | None = None) -> ResidualReport:
    """Reconstruct with ``L_theta`` and measure what the fit leaves behind.

    The signal grid is square on the unit square; its side ``nx`` is inferred
    from the column count unless given.
    """
    L = sp.csr_matrix(L_theta)
    if nx is None:
        nx = int(round(np.sqrt(L.shape[1])))
    if nx * nx != L.shape[1]:
        raise InputError(f"{L.shape[1]} columns is not a square signal grid")
    if b_noisy.data.size != L.shape[0]:
        raise InputError(f"data has {b_noisy.data.size} entries but L has {L.shape[0]} rows")
    u = reconstruct(L, b_noisy.data, cfg, nx)
    r = b_noisy.with_data(b_noisy.data - L @ u)
    res = structure(r, emd_cfg)
    return ResidualReport(
        residual=r,
        reconstruction=GridFn(nx, nx, 1.0 / nx, 1.0 / nx, u),
        struc_value=res.value,
        l1_value=norm_l1(r),
        l2_value=norm_l2(r),
        flux=res.flux,
        emd_converged=res.converged,
        emd_iterations=res.iterations,
    )
