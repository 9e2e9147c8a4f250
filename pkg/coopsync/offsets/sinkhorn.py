"""Entropic optimal transport between equal-size point sets, in the log domain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .. import constants as const
from .. import logger
from ..exceptions import SinkhornError


@dataclass(frozen=True)
class TransportPlan:
    """
    Solution of one (or a batch of) n x n transport problems.

    Attributes:
        cost: (..., n, n) cost matrix
        plan: (..., n, n) plan with marginals 1/n
        iterations: Sweeps performed
        residual: Largest row or column marginal error
    """

    cost: torch.Tensor
    plan: torch.Tensor
    iterations: int
    residual: float

    @property
    def converged(self) -> bool:
        return self.residual < const.SINKHORN_TOL


def sinkhorn(
    cost: torch.Tensor,
    reg: float = const.SINKHORN_REG,
    max_iter: int = const.SINKHORN_MAX_ITER,
    tol: float = const.SINKHORN_TOL,
) -> TransportPlan:
    """
    Uniform-marginal Sinkhorn iterations on exp(-C / reg).

    Works on a single (n, n) cost or a batch (..., n, n). Potentials are
    updated with log-sum-exp so small ``reg`` does not underflow.

    Args:
        cost: Non-negative finite cost
        reg: Entropic regularization (> 0)
        max_iter: Upper bound on sweeps
        tol: Stop once every marginal is within ``tol`` of 1/n

    Raises:
        SinkhornError: On non-finite or negative cost, or non-positive reg
    """
    if not reg > 0:
        raise SinkhornError("Regularization must be positive", str(reg))
    if cost.shape[-1] != cost.shape[-2]:
        raise SinkhornError("Cost must be square", str(tuple(cost.shape)))
    cost = cost.detach().to(torch.float64)
    if not torch.isfinite(cost).all():
        raise SinkhornError("Cost holds NaN or Inf")
    if (cost < 0).any():
        raise SinkhornError("Cost holds negative entries", f"min={float(cost.min())}")

    n = cost.shape[-1]
    log_marginal = -math.log(n)
    f = torch.zeros(cost.shape[:-1], dtype=torch.float64)
    g = torch.zeros(cost.shape[:-1], dtype=torch.float64)
    plan = torch.full_like(cost, 1.0 / (n * n))
    residual = float("inf")
    iterations = 0
    for iterations in range(1, max_iter + 1):
        f = reg * (log_marginal - torch.logsumexp((g.unsqueeze(-2) - cost) / reg, dim=-1))
        g = reg * (log_marginal - torch.logsumexp((f.unsqueeze(-1) - cost) / reg, dim=-2))
        plan = torch.exp((f.unsqueeze(-1) + g.unsqueeze(-2) - cost) / reg)
        rows = (plan.sum(dim=-1) - 1.0 / n).abs().max()
        cols = (plan.sum(dim=-2) - 1.0 / n).abs().max()
        residual = float(torch.maximum(rows, cols))
        if residual < tol:
            break
    if residual >= tol:
        logger.warning(f"Sinkhorn stopped after {iterations} iterations, residual {residual:.2e}")
    return TransportPlan(cost, plan, iterations, residual)
