"""Nelder-Mead simplex minimisation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class OptimizerError(RuntimeError):
    pass


@dataclass(frozen=True)
class NelderMeadOptions:
    ftol: float = 1e-6
    max_iter: int = 20000
    max_fev: Optional[int] = None
    initial_step: float = 0.1
    reflect: float = 1.0
    expand: float = 2.0
    contract: float = 0.5
    shrink: float = 0.5
    # dimension-dependent coefficients of Gao & Han (2012); off by default
    adaptive: bool = False


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    reason: str
    best_history: list[float] = field(default_factory=list)


def _coefficients(opts: NelderMeadOptions, n: int) -> tuple[float, float, float, float]:
    if opts.adaptive:
        return 1.0, 1.0 + 2.0 / n, 0.75 - 1.0 / (2.0 * n), 1.0 - 1.0 / n
    return opts.reflect, opts.expand, opts.contract, opts.shrink


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0,
    options: NelderMeadOptions | None = None,
    callback: Callable[[np.ndarray, float], None] | None = None,
) -> NelderMeadResult:
    """Minimise ``objective`` from ``x0``.

    Stops when the spread of function values over the simplex drops below
    ``ftol`` or after ``max_iter`` iterations (``max_fev`` evaluations if set).
    The initial simplex offsets each coordinate of ``x0`` by ``initial_step``.
    """
    opts = options or NelderMeadOptions()
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    if n < 1:
        raise ValueError("nelder_mead needs at least one parameter")
    rho, chi, gamma, sigma = _coefficients(opts, n)
    nfev = 0

    def f(x: np.ndarray) -> float:
        nonlocal nfev
        nfev += 1
        value = float(objective(x))
        if not np.isfinite(value):
            raise OptimizerError(
                f"objective returned {value} at evaluation {nfev} (x = {np.array2string(x, precision=4)})"
            )
        return value

    sim = np.tile(x0, (n + 1, 1))
    sim[1:] += opts.initial_step * np.eye(n)
    fs = np.array([f(x) for x in sim])
    history: list[float] = []
    nit = 0
    reason = "max_iter"
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        history.append(float(fs[0]))
        if callback is not None:
            callback(sim[0], fs[0])
        if fs[-1] - fs[0] < opts.ftol:
            reason = "ftol"
            break
        if nit >= opts.max_iter:
            reason = "max_iter"
            break
        if opts.max_fev is not None and nfev >= opts.max_fev:
            reason = "max_fev"
            break
        nit += 1

        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = centroid + rho * (centroid - worst)
        fr = f(xr)
        if fr < fs[0]:
            xe = centroid + chi * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + gamma * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xcc = centroid + gamma * (worst - centroid)
            fcc = f(xcc)
            if fcc < fs[-1]:
                sim[-1], fs[-1] = xcc, fcc
                continue
        # shrink towards the best vertex
        sim[1:] = sim[0] + sigma * (sim[1:] - sim[0])
        fs[1:] = [f(x) for x in sim[1:]]

    return NelderMeadResult(sim[0].copy(), float(fs[0]), nit, nfev, reason, history)
