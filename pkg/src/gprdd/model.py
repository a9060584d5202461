"""Sharp-RDD Gaussian process models at fixed parameters.

Two arms, each with its own GP prior; the arms share nothing except, under
the same-covariance assumption, the kernel parameter values.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyArm
from .gp import GPConditional, KernelParams, MeanBasis, gp_conditional


class Arm(str, enum.Enum):
    TREATED = "T"
    CONTROL = "C"

    @property
    def other(self) -> "Arm":
        return Arm.CONTROL if self is Arm.TREATED else Arm.TREATED


class Assumption(str, enum.Enum):
    SAME_COVARIANCE = "same-cov"
    STATIONARY = "stationary"


@dataclass(frozen=True)
class RddDataset:
    """Running variable ``x``, response ``y`` and boundary ``b``.

    Assignment is the sharp rule ``w = 1`` iff ``x >= b``.
    """

    x: np.ndarray
    y: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError(f"x and y lengths differ ({x.size} vs {y.size})")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and math.isfinite(self.b)):
            raise ValueError("dataset values and boundary must be finite")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "b", float(self.b))

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def w(self) -> np.ndarray:
        return (self.x >= self.b).astype(int)

    def mask(self, arm: Arm) -> np.ndarray:
        return self.x >= self.b if Arm(arm) is Arm.TREATED else self.x < self.b

    def arm(self, arm: Arm) -> tuple[np.ndarray, np.ndarray]:
        m = self.mask(arm)
        return self.x[m], self.y[m]

    def arm_size(self, arm: Arm) -> int:
        return int(np.count_nonzero(self.mask(arm)))

    def require_both_arms(self):
        for arm in Arm:
            if self.arm_size(arm) == 0:
                raise EmptyArm(f"{arm.name.lower()} arm is empty (b={self.b})")

    def window(self, h: float) -> "RddDataset":
        keep = np.abs(self.x - self.b) <= h
        return RddDataset(self.x[keep], self.y[keep], self.b)


@dataclass(frozen=True)
class ModelSpec:
    """Model structure, optionally carrying fixed parameter values.

    ``kernels`` is empty (structure only, e.g. for the sampler), one kernel
    under the same-covariance assumption, or ``(treated, control)`` under
    the stationary assumption. ``mean_order`` is the polynomial basis size
    per arm; ``mean_treated``/``mean_control`` default to zero coefficients.
    """

    assumption: Assumption = Assumption.SAME_COVARIANCE
    mean_order: int = 2
    kernels: tuple = ()
    mean_treated: MeanBasis | None = None
    mean_control: MeanBasis | None = None

    def __post_init__(self):
        object.__setattr__(self, "assumption", Assumption(self.assumption))
        kernels = tuple(self.kernels)
        object.__setattr__(self, "kernels", kernels)
        if self.mean_order < 0:
            raise ValueError("mean_order must be >= 0")
        if kernels:
            want = 1 if self.assumption is Assumption.SAME_COVARIANCE else 2
            if len(kernels) != want:
                raise ValueError(f"{self.assumption.value} needs exactly {want} kernel(s), got {len(kernels)}")
        for name in ("mean_treated", "mean_control"):
            basis = getattr(self, name)
            if basis is None:
                object.__setattr__(self, name, MeanBasis((0.0,) * self.mean_order))
            elif basis.order != self.mean_order:
                raise ValueError(f"{name} has order {basis.order}, expected {self.mean_order}")

    @property
    def n_kernels(self) -> int:
        return 1 if self.assumption is Assumption.SAME_COVARIANCE else 2

    def kernel(self, arm: Arm) -> KernelParams:
        if not self.kernels:
            raise ValueError("model spec carries no kernel parameters")
        if self.assumption is Assumption.SAME_COVARIANCE:
            return self.kernels[0]
        return self.kernels[0] if Arm(arm) is Arm.TREATED else self.kernels[1]

    def mean(self, arm: Arm) -> MeanBasis:
        return self.mean_treated if Arm(arm) is Arm.TREATED else self.mean_control

    def with_params(self, kernels, mean_treated=None, mean_control=None) -> "ModelSpec":
        if isinstance(kernels, KernelParams):
            kernels = (kernels,)
        return ModelSpec(self.assumption, self.mean_order, tuple(kernels), mean_treated, mean_control)

    def swapped(self) -> "ModelSpec":
        """Same model with the treated and control roles exchanged."""
        kernels = self.kernels[::-1] if self.assumption is Assumption.STATIONARY else self.kernels
        return ModelSpec(self.assumption, self.mean_order, kernels, self.mean_control, self.mean_treated)


@dataclass(frozen=True)
class TauConditional:
    mean: float
    variance: float
    treated: GPConditional
    control: GPConditional


def arm_posterior(data: RddDataset, spec: ModelSpec, arm: Arm) -> GPConditional:
    arm = Arm(arm)
    x, y = data.arm(arm)
    if x.size == 0:
        raise EmptyArm(f"{arm.name.lower()} arm is empty")
    return gp_conditional(x, y, spec.mean(arm), spec.kernel(arm), data.b)


def tau_conditional(data: RddDataset, spec: ModelSpec) -> TauConditional:
    """Posterior of the boundary effect; arms are independent a posteriori."""
    data.require_both_arms()
    post_t = arm_posterior(data, spec, Arm.TREATED)
    post_c = arm_posterior(data, spec, Arm.CONTROL)
    return TauConditional(post_t.mean - post_c.mean, post_t.variance + post_c.variance, post_t, post_c)
