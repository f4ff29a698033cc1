"""Small dense linear algebra and the mean/covariance ODE pipeline.

The augmented system integrated by :func:`solve_augmented` is::

    z'  = F(z)
    T'  = -T J(z),                    T(0) = I
    Xi' = T (G(z) - F(z) F(z)') T',   Xi(0) = 0

with ``Sigma = T^{-1} Xi T^{-T}`` evaluated at every grid point.  All
matrices are q x q with q small (at most a few dozen), so everything is
plain numpy on dense arrays.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .core import DomainBox, DomainError, ProcessModel, in_domain

__all__ = [
    "SingularMatrixError",
    "TrajectoryTable",
    "mat_inverse",
    "mat_exp",
    "condition_number",
    "jacobian_fd",
    "time_grid",
    "solve_augmented",
    "sigma_linear_closed_form",
]

PIVOT_TOL = 1e-14
COND_LIMIT = 1e12


class SingularMatrixError(ArithmeticError):
    pass


def mat_inverse(M) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting."""
    a = np.array(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got shape {a.shape}")
    q = a.shape[0]
    aug = np.hstack([a, np.eye(q)])
    for col in range(q):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < PIVOT_TOL:
            raise SingularMatrixError(f"pivot {aug[piv, col]:.3e} in column {col}")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= np.outer(factors, aug[col])
    return aug[:, q:]


def condition_number(M, M_inv=None) -> float:
    """1-norm condition estimate ``|M|_1 |M^{-1}|_1``."""
    M = np.asarray(M, dtype=float)
    if M_inv is None:
        M_inv = mat_inverse(M)
    return float(np.abs(M).sum(axis=0).max() * np.abs(M_inv).sum(axis=0).max())


def mat_exp(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring a truncated Taylor series."""
    M = np.array(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("mat_exp needs a finite matrix")
    q = M.shape[0]
    norm = np.abs(M).sum(axis=0).max() if q else 0.0
    s = 0
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    X = M / (2.0**s)
    result = np.eye(q)
    term = np.eye(q)
    for k in range(1, 40):
        term = term @ X / k
        result = result + term
        if np.abs(term).max() <= 1e-18 * np.abs(result).max():
            break
    for _ in range(s):
        result = result @ result
    return result


def jacobian_fd(F: Callable, z, domain: Optional[DomainBox] = None) -> np.ndarray:
    """Central-difference Jacobian with step ``1e-6 * max(1, |z_k|)``.

    If ``domain`` is given every evaluation point must lie inside it.
    """
    z = np.asarray(z, dtype=float)
    q = z.shape[0]
    J = np.empty((q, q))
    for k in range(q):
        h = 1e-6 * max(1.0, abs(z[k]))
        zp = z.copy()
        zm = z.copy()
        zp[k] += h
        zm[k] -= h
        if domain is not None and not (in_domain(zp, domain) and in_domain(zm, domain)):
            raise DomainError(f"finite-difference stencil leaves the domain at coordinate {k}")
        J[:, k] = (np.asarray(F(zp)) - np.asarray(F(zm))) / (2 * h)
    return J


def time_grid(t_end: float, dt: float) -> np.ndarray:
    """``0, dt, 2 dt, ...`` up to ``t_end``; a final short step lands on
    ``t_end`` when it is not a multiple of ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    K = int(math.floor(t_end / dt + 1e-9))
    grid = np.arange(K + 1) * dt
    if t_end - grid[-1] > 1e-9 * dt:
        grid = np.append(grid, t_end)
    return grid


@dataclass
class TrajectoryTable:
    """Solution of the augmented ODE on a time grid.

    ``z`` has shape (K, q); ``T``, ``Xi`` and ``Sigma`` have shape (K, q, q).
    ``exited_domain`` is set when the solve halted because the next grid
    point would have left the model domain; ``stopped`` when a caller
    supplied stop rule fired.
    """

    grid: np.ndarray
    z: np.ndarray
    T: Optional[np.ndarray]
    Xi: Optional[np.ndarray]
    Sigma: np.ndarray
    dt: float
    exited_domain: bool = False
    stopped: bool = False
    label: str = ""

    @property
    def q(self) -> int:
        return self.z.shape[1]

    @property
    def t_final(self) -> float:
        return float(self.grid[-1])

    def nearest_index(self, t: float) -> int:
        i = int(np.searchsorted(self.grid, t))
        if i >= len(self.grid):
            return len(self.grid) - 1
        if i > 0 and t - self.grid[i - 1] <= self.grid[i] - t:
            return i - 1
        return i

    def at(self, t: float):
        """``(z, Sigma)`` at the grid point nearest to ``t``."""
        i = self.nearest_index(t)
        return self.z[i], self.Sigma[i]

    def header(self) -> list:
        q = self.q
        cols = ["t"] + [f"z_{k}" for k in range(1, q + 1)]
        cols += [f"Sigma_{i}{j}" if q < 10 else f"Sigma_{i}_{j}"
                 for i in range(1, q + 1) for j in range(1, q + 1)]
        return cols

    def to_csv(self, fh=None) -> Optional[str]:
        """Write ``t, z_1..z_q, Sigma_11..Sigma_qq`` with 17 significant digits."""
        own = fh is None
        if own:
            fh = io.StringIO()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.header())
        for k in range(len(self.grid)):
            row = [self.grid[k], *self.z[k], *self.Sigma[k].ravel()]
            w.writerow(["%.17g" % v for v in row])
        if own:
            return fh.getvalue()
        return None

    @classmethod
    def from_csv(cls, text: str, dt: float = float("nan")) -> "TrajectoryTable":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        q = sum(1 for c in header if c.startswith("z_"))
        if len(header) != 1 + q + q * q:
            raise ValueError("malformed trajectory header")
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), -1)
        return cls(
            grid=data[:, 0],
            z=data[:, 1 : 1 + q],
            T=None,
            Xi=None,
            Sigma=data[:, 1 + q :].reshape(-1, q, q),
            dt=dt,
        )

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "dt": self.dt,
            "exited_domain": self.exited_domain,
            "stopped": self.stopped,
            "t": self.grid.tolist(),
            "z": self.z.tolist(),
            "Sigma": self.Sigma.tolist(),
        }
        if self.T is not None:
            out["T"] = self.T.tolist()
            out["Xi"] = self.Xi.tolist()
        return out


def _fundamental_derivative(T, A):
    return -T @ A


def _derivatives(model: ProcessModel, jac, z, T):
    F = np.asarray(model.drift(z), dtype=float)
    A = jac(z)
    G = np.asarray(model.diffusion(z), dtype=float)
    C = G - np.outer(F, F)
    return F, _fundamental_derivative(T, A), T @ C @ T.T


def _rk4_step(model, jac, z, T, Xi, h):
    k1z, k1T, k1X = _derivatives(model, jac, z, T)
    k2z, k2T, k2X = _derivatives(model, jac, z + 0.5 * h * k1z, T + 0.5 * h * k1T)
    k3z, k3T, k3X = _derivatives(model, jac, z + 0.5 * h * k2z, T + 0.5 * h * k2T)
    k4z, k4T, k4X = _derivatives(model, jac, z + h * k3z, T + h * k3T)
    z = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
    T = T + h / 6 * (k1T + 2 * k2T + 2 * k3T + k4T)
    Xi = Xi + h / 6 * (k1X + 2 * k2X + 2 * k3X + k4X)
    return z, T, Xi


def solve_augmented(
    model: ProcessModel,
    t_end: float,
    dt: float = 1e-4,
    stop: Optional[Callable[[float, np.ndarray], bool]] = None,
) -> TrajectoryTable:
    """Integrate mean, fundamental matrix and quadratic variation with RK4.

    Parameters
    ----------
    model : ProcessModel
    t_end : float
        Final time; the grid is :func:`time_grid` ``(t_end, dt)``.
    dt : float
        Fixed step.
    stop : callable, optional
        ``stop(t, z)`` is checked after each accepted step; when it returns
        True that point is kept and integration ends.

    Raises
    ------
    FloatingPointError
        If the state becomes non-finite.
    SingularMatrixError
        If the fundamental matrix becomes numerically singular.
    """
    grid = time_grid(t_end, dt)
    q = model.q
    jac = model.jacobian
    if jac is None:
        jac = lambda z: jacobian_fd(model.drift, z, model.domain)  # noqa: E731

    z = np.array(model.z0, dtype=float)
    T = np.eye(q)
    Xi = np.zeros((q, q))
    zs, Ts, Xis = [z], [T], [Xi]
    exited = stopped = False
    for i in range(len(grid) - 1):
        h = grid[i + 1] - grid[i]
        try:
            z_new, T_new, Xi_new = _rk4_step(model, jac, z, T, Xi, h)
        except DomainError:
            exited = True
            break
        if not (np.all(np.isfinite(z_new)) and np.all(np.isfinite(T_new)) and np.all(np.isfinite(Xi_new))):
            raise FloatingPointError(f"non-finite state at t={grid[i + 1]:.6g}")
        if not in_domain(z_new, model.domain):
            exited = True
            break
        z, T, Xi = z_new, T_new, Xi_new
        zs.append(z)
        Ts.append(T)
        Xis.append(Xi)
        if stop is not None and stop(float(grid[i + 1]), z):
            stopped = True
            break

    K = len(zs)
    Ts = np.array(Ts)
    Xis = np.array(Xis)
    Sigma = np.empty((K, q, q))
    for k in range(K):
        Tinv = mat_inverse(Ts[k])
        cond = condition_number(Ts[k], Tinv)
        if cond > COND_LIMIT:
            raise SingularMatrixError(
                f"fundamental matrix numerically singular at t={grid[k]:.6g} "
                f"(condition {cond:.3e}); it is invertible in exact arithmetic"
            )
        Sigma[k] = Tinv @ Xis[k] @ Tinv.T
    return TrajectoryTable(
        grid=grid[:K].copy(),
        z=np.array(zs),
        T=Ts,
        Xi=Xis,
        Sigma=Sigma,
        dt=dt,
        exited_domain=exited,
        stopped=stopped,
        label=model.label,
    )


def sigma_linear_closed_form(A, model: ProcessModel, t_end: float, dt: float = 1e-4) -> np.ndarray:
    """Covariance at ``t_end`` for an affine drift with constant Jacobian ``A``.

    The mean path uses the exact affine flow (through an augmented matrix
    exponential), the variation-of-parameters integral is done by
    composite Simpson on :func:`time_grid`, and the result is conjugated
    by ``exp(t A)``.  No RK4 is involved, so this is an independent check
    of :func:`solve_augmented`.
    """
    A = np.asarray(A, dtype=float)
    q = model.q
    grid = time_grid(t_end, dt)
    z0 = np.array(model.z0)
    b = np.asarray(model.drift(z0)) - A @ z0

    aug = np.zeros((q + 1, q + 1))
    aug[:q, :q] = A
    aug[:q, q] = b
    start = np.append(z0, 1.0)

    check_every = max(1, len(grid) // 10)
    integrand = np.empty((len(grid), q, q))
    for k, s in enumerate(grid):
        z = (mat_exp(s * aug) @ start)[:q]
        if k % check_every == 0 or k == len(grid) - 1:
            J = jacobian_fd(model.drift, z)
            if np.abs(J - A).max() > 1e-6:
                raise ValueError(f"model not linear: Jacobian differs from A at t={s:.4g}")
        F = np.asarray(model.drift(z))
        C = np.asarray(model.diffusion(z)) - np.outer(F, F)
        E = mat_exp(-s * A)
        integrand[k] = E @ C @ E.T
    if len(grid) == 1:
        return np.zeros((q, q))
    integral = simpson(integrand, x=grid, axis=0)
    Et = mat_exp(t_end * A)
    return Et @ integral @ Et.T
