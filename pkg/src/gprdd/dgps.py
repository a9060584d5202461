"""Registry of simulation data-generating processes.

Coefficients live in ``data/dgps.json`` together with their sources.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from numpy.polynomial import polynomial as P

from .model import RddDataset

NOISE_SD = 0.1295


@dataclass(frozen=True)
class DgpSpec:
    name: str
    label: str
    control: tuple  # ascending polynomial coefficients, x < 0
    treated: tuple  # x >= 0
    tau: float
    noise_sd: float = NOISE_SD
    boundary: float = 0.0
    source: str = ""

    def __post_init__(self):
        jump = self.treated[0] - self.control[0]
        if abs(jump - self.tau) > 1e-12:
            raise ValueError(f"{self.name}: declared tau {self.tau} but coefficients give {jump}")

    def _piecewise(self, x, deriv: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ct = P.polyder(self.treated, deriv) if deriv else np.asarray(self.treated)
        cc = P.polyder(self.control, deriv) if deriv else np.asarray(self.control)
        return np.where(x >= self.boundary, P.polyval(x, ct), P.polyval(x, cc))

    def mean(self, x) -> np.ndarray:
        return self._piecewise(x)

    def second_derivative(self, x) -> np.ndarray:
        return self._piecewise(x, 2)

    def sample_x(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return 2.0 * rng.beta(2.0, 4.0, size=n) - 1.0


@lru_cache(maxsize=1)
def _load() -> dict:
    text = resources.files("gprdd").joinpath("data/dgps.json").read_text()
    raw = json.loads(text)
    out = {}
    for name, entry in raw["dgps"].items():
        out[name] = DgpSpec(
            name=name,
            label=entry["label"],
            control=tuple(entry["control"]),
            treated=tuple(entry["treated"]),
            tau=float(entry["tau"]),
            noise_sd=float(raw["noise_sd"]),
            boundary=float(raw["boundary"]),
            source=entry["source"],
        )
    return out


DGP_NAMES = ("lee", "quad", "cubic", "cate1", "cate2", "ludwig", "curvature")


def get_dgp(name: str) -> DgpSpec:
    key = name.lower().replace(" ", "").replace("_", "")
    try:
        return _load()[key]
    except KeyError:
        raise KeyError(f"unknown DGP {name!r}; choose from {', '.join(DGP_NAMES)}") from None


def all_dgps() -> list:
    return [get_dgp(n) for n in DGP_NAMES]


def generate_replication(dgp: DgpSpec, n: int, seed) -> RddDataset:
    """``n`` draws of ``(x, mu(x) + eps)``; ``seed`` is anything
    ``numpy.random.default_rng`` accepts."""
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    x = dgp.sample_x(rng, n)
    y = dgp.mean(x) + dgp.noise_sd * rng.standard_normal(n)
    return RddDataset(x, y, dgp.boundary)
