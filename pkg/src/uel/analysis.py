"""Manufactured solutions, relative error norms and observed-order
extraction for the convergence studies."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, ConfigurationError

CASE_NAMES = ("paper_sin", "linear", "quadratic", "constant")


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution u with its gradient and source f = -lap(u); boundary
    data derive from it (g_D = u on Gamma_D, g_N = grad(u) . n on Gamma_N)."""

    name: str
    u: callable
    grad_u: callable
    f: callable


def make_case(name):
    """Built-in manufactured solutions.

    paper_sin : u = sin(x) sin(y), f = 2 sin(x) sin(y) (the experiment case)
    linear    : u = 1 + x + y, f = 0 (exactness oracle for the FEM)
    quadratic : u = x^2 + y^2, f = -4 (exactness oracle for the p=2 scheme)
    constant  : u = 1, f = 0
    """
    if name == "paper_sin":
        return ManufacturedCase(
            "paper_sin",
            lambda x, y: np.sin(x) * np.sin(y),
            lambda x, y: (np.cos(x) * np.sin(y), np.sin(x) * np.cos(y)),
            lambda x, y: 2.0 * np.sin(x) * np.sin(y))
    if name == "linear":
        return ManufacturedCase(
            "linear",
            lambda x, y: 1.0 + x + y,
            lambda x, y: (x * 0.0 + 1.0, y * 0.0 + 1.0),
            lambda x, y: x * 0.0)
    if name == "quadratic":
        return ManufacturedCase(
            "quadratic",
            lambda x, y: x * x + y * y,
            lambda x, y: (2.0 * x, 2.0 * y),
            lambda x, y: x * 0.0 - 4.0)
    if name == "constant":
        return ManufacturedCase(
            "constant",
            lambda x, y: x * 0.0 + 1.0,
            lambda x, y: (x * 0.0, y * 0.0),
            lambda x, y: x * 0.0)
    raise ConfigurationError(
        f"unknown case {name!r}; expected one of {', '.join(CASE_NAMES)}")


def relative_error(f_h, f_exa, beta, weights=None):
    """Relative discrete L^beta error ||f_h - f_exa|| / ||f_exa||.

    Scalar fields are 1D arrays; vector fields are (m, 2) arrays measured
    through the pointwise Euclidean magnitude.  weights carry the region
    measure per sample (uniform when omitted); beta is 1, 2 or the string
    "inf"/float("inf").
    """
    f_h = np.asarray(f_h, dtype=float)
    f_exa = np.asarray(f_exa, dtype=float)
    if f_h.shape != f_exa.shape:
        raise AnalysisError("field shapes differ")
    if f_h.ndim == 2:
        diff = np.hypot(f_h[:, 0] - f_exa[:, 0], f_h[:, 1] - f_exa[:, 1])
        ref = np.hypot(f_exa[:, 0], f_exa[:, 1])
    else:
        diff = np.abs(f_h - f_exa)
        ref = np.abs(f_exa)
    if beta in ("inf", math.inf):
        denom = ref.max(initial=0.0)
        if denom == 0.0:
            raise AnalysisError("zero reference norm; relative error undefined")
        return float(diff.max(initial=0.0) / denom)
    w = np.ones_like(diff) if weights is None else np.asarray(weights, dtype=float)
    if beta == 1:
        denom = float(np.sum(w * ref))
        if denom == 0.0:
            raise AnalysisError("zero reference norm; relative error undefined")
        return float(np.sum(w * diff) / denom)
    if beta == 2:
        denom = math.sqrt(float(np.sum(w * ref * ref)))
        if denom == 0.0:
            raise AnalysisError("zero reference norm; relative error undefined")
        return float(math.sqrt(float(np.sum(w * diff * diff))) / denom)
    raise ConfigurationError(f"beta must be 1, 2 or 'inf', got {beta!r}")


def observed_order(err_coarse, err_fine):
    """log2 error ratio between grids differing by a factor of two."""
    if err_coarse <= 0.0 or err_fine <= 0.0:
        raise AnalysisError("observed order needs positive errors")
    return math.log2(err_coarse / err_fine)


def fitted_order(hs, errs):
    """Least-squares slope of log(err) against log(h) over a grid sweep."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if len(hs) < 2:
        raise AnalysisError("order fit needs at least two grids")
    if np.any(hs <= 0.0) or np.any(errs <= 0.0):
        raise AnalysisError("order fit needs positive mesh sizes and errors")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


@dataclass
class ReportRow:
    """One grid of a convergence experiment."""

    scheme: str
    domain: str
    bc: str
    p: int
    alpha: float
    n: int
    h: float
    err_u: tuple          # (L1, L2, Linf)
    err_g: tuple
    order_u_linf: float = None
    order_g_linf: float = None
    cond2: float = None
    solver: str = ""
    precond: str = None
    iters: int = 0
    residual: float = 0.0
    assemble_s: float = None
    solve_s: float = None
    err_u_linf_nodal: float = None


@dataclass
class ConvergenceReport:
    """Grid sweep of one configuration, ordered by N."""

    rows: list = field(default_factory=list)

    def add(self, row):
        self.rows.append(row)
        self.rows.sort(key=lambda r: r.n)
        for prev, cur in zip(self.rows, self.rows[1:]):
            if cur.n == 2 * prev.n:
                cur.order_u_linf = observed_order(prev.err_u[2], cur.err_u[2])
                cur.order_g_linf = observed_order(prev.err_g[2], cur.err_g[2])

    def fitted(self, select):
        """Fitted order of a per-row quantity, e.g. lambda r: r.err_u[1]."""
        return fitted_order([r.h for r in self.rows],
                            [select(r) for r in self.rows])
