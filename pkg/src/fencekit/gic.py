"""Generalized information criterion comparators: Qhat_M + lambda_n |M|.

Baselines for the simulation studies. ``lambda_rule`` picks the penalizer:
Cp uses 2, BIC uses log(n), Hannan-Quinn uses c * log(log(n)) with c > 2, or
a fixed value. The measure values can optionally be mapped to the Gaussian
deviance scale n*log(Qhat/n) before penalizing, which is the scale on which
the classical Cp/BIC penalties are calibrated for least-squares fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingFit, ValidationError
from .measures import FitResult
from .model_space import CandidateModel, ModelSpace


@dataclass(frozen=True)
class GicConfig:
    """Penalizer rule plus the sample size entering lambda_n."""

    lambda_rule: str = "bic"
    sample_size: int = 0
    fixed_lambda: float | None = None
    hq_constant: float = 2.01
    qhat_scale: str = "raw"

    def __post_init__(self):
        if self.lambda_rule not in {"fixed", "cp", "bic", "hq"}:
            raise ValidationError(f"unknown lambda rule {self.lambda_rule!r}")
        if self.lambda_rule == "fixed":
            if self.fixed_lambda is None or self.fixed_lambda < 0:
                raise ValidationError("fixed rule needs fixed_lambda >= 0")
        if self.lambda_rule in {"bic", "hq"} and self.sample_size < 2:
            raise ValidationError("bic/hq need the effective sample size n >= 2")
        if self.lambda_rule == "hq" and self.hq_constant <= 2:
            raise ValidationError("Hannan-Quinn constant must exceed 2")
        if self.qhat_scale not in {"raw", "deviance"}:
            raise ValidationError(f"unknown qhat scale {self.qhat_scale!r}")

    @property
    def penalty(self) -> float:
        if self.lambda_rule == "fixed":
            return float(self.fixed_lambda)
        if self.lambda_rule == "cp":
            return 2.0
        if self.lambda_rule == "bic":
            return float(np.log(self.sample_size))
        return float(self.hq_constant * np.log(np.log(self.sample_size)))


def gic_select(
    space: ModelSpace, fits: dict[str, FitResult], config: GicConfig
) -> CandidateModel:
    """Minimizer of Qhat_M + lambda_n |M| (ties: smaller dimension, then id)."""
    lam = config.penalty
    best = None
    for model in space.models:
        if model.id not in fits:
            raise MissingFit(f"no fit for model {model.id!r}")
        q = fits[model.id].qhat
        if config.qhat_scale == "deviance":
            n = config.sample_size
            if n < 2:
                raise ValidationError("deviance scale needs the sample size")
            q = n * float(np.log(max(q, 1e-300) / n))
        key = (q + lam * model.dimension, model.dimension, model.id)
        if best is None or key < best[0]:
            best = (key, model)
    return best[1]
