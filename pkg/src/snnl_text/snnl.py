"""Soft nearest neighbor loss on pairwise cosine distances.

For a batch ``x`` with labels ``y`` at temperature ``T``::

    loss = -1/b * sum_i log( sum_{j != i, y_j = y_i} exp(-d_ij / T)
                             / sum_{k != i} exp(-d_ik / T) )

Low values mean same-class points sit closer together than points of other
classes. Every sum gets ``SUM_EPS`` added and every log argument is floored
at ``LOG_FLOOR``, so points without a same-class neighbor stay finite.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import as_float_matrix, as_label_vector

SUM_EPS = 1e-8
LOG_FLOOR = 1e-30


class SNNLWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class TemperatureSchedule:
    eta: float = 1.0
    gamma: float = 0.55

    def __post_init__(self):
        if self.eta < 1:
            raise ValueError(f"eta must be >= 1, got {self.eta}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def __call__(self, epoch):
        return annealing_temperature(epoch, self)


def annealing_temperature(epoch, schedule=None):
    """``T = 1 / (eta + epoch) ** gamma``; epoch 0 gives T = 1 when eta = 1."""
    if schedule is None:
        schedule = TemperatureSchedule()
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return 1.0 / (schedule.eta + epoch) ** schedule.gamma


def _unit_rows(x, norm_floor):
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if norm_floor is None:
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise ValueError(f"row {zero[0]} has zero norm; cosine distance undefined")
        denom = norms
    else:
        denom = np.maximum(norms, norm_floor)
    return x / denom[:, None], norms, denom


def pairwise_cosine_distance(x, norm_floor=None):
    """``D[i, j] = 1 - cos(x_i, x_j)`` with an exactly zero diagonal.

    Zero rows raise unless ``norm_floor`` is given, in which case norms are
    floored at it (a zero row is then at distance 1 from everything).
    """
    x = np.asarray(x, dtype=np.float64)
    u, _, _ = _unit_rows(x, norm_floor)
    return _cosine_from_unit(u)


def _cosine_from_unit(u):
    D = 1.0 - u @ u.T
    np.clip(D, 0.0, 2.0, out=D)
    np.fill_diagonal(D, 0.0)
    # symmetrize away matmul rounding
    return 0.5 * (D + D.T)


@dataclass(frozen=True)
class SNNLResult:
    loss: float
    grad: np.ndarray
    isolated: np.ndarray
    all_isolated: bool


def snnl_from_distances(D, y, temperature):
    """Loss and its gradient with respect to the distance matrix ``D``.

    ``D`` is treated as a free matrix: the returned gradient has entries for
    every ordered pair ``(i, j)`` and a zero diagonal.
    """
    D = np.asarray(D, dtype=np.float64)
    y = np.asarray(y)
    b = D.shape[0]
    if b < 2:
        raise ValueError(f"soft nearest neighbor loss needs b >= 2, got b={b}")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    same = y[:, None] == y[None, :]
    np.fill_diagonal(same, False)
    E = np.exp(-D / temperature)
    np.fill_diagonal(E, 0.0)
    num = (E * same).sum(axis=1) + SUM_EPS
    den = E.sum(axis=1) + SUM_EPS
    ratio = num / den
    clamped = ratio < LOG_FLOOR
    loss = -np.log(np.maximum(ratio, LOG_FLOOR)).mean()
    # dL/dE_ij = -(1/b) (same_ij / num_i - 1 / den_i);  dE/dD = -E / T
    coef = same / num[:, None] - 1.0 / den[:, None]
    coef[clamped] = 0.0
    G = E * coef / (b * temperature)
    isolated = ~same.any(axis=1)
    # + 0.0 turns a -0.0 into 0.0
    return float(loss) + 0.0, G, isolated


def snnl(x, y, temperature, norm_floor=None):
    """Soft nearest neighbor loss of ``x`` and its gradient with respect to ``x``."""
    x = as_float_matrix(x, name="x")
    y = as_label_vector(y, x.shape[0])
    u, norms, denom = _unit_rows(x, norm_floor)
    loss, G, isolated = snnl_from_distances(_cosine_from_unit(u), y, temperature)
    # D = 1 - U U^T  =>  dL/dU = -(G + G^T) U
    grad_u = -(G + G.T) @ u
    radial = np.einsum("ij,ij->i", grad_u, u)
    grad_x = (grad_u - radial[:, None] * u) / denom[:, None]
    if norm_floor is not None:
        # below the floor the map is linear (x / floor), no radial projection
        small = norms < norm_floor
        if np.any(small):
            grad_x[small] = grad_u[small] / norm_floor
    all_isolated = bool(isolated.all())
    if all_isolated:
        warnings.warn(
            "no point in the batch has a same-class neighbor; loss is fully clamped",
            SNNLWarning,
            stacklevel=2,
        )
    return SNNLResult(loss, grad_x, isolated, all_isolated)


def snnl_forward(x, y, temperature):
    return snnl(x, y, temperature).loss


def snnl_gradient(x, y, temperature):
    return snnl(x, y, temperature).grad
