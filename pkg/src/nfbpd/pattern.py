"""Frequency drift of polar-domain sparse supports (beam split) and its
coherence kernel.

Two steering vectors taken at different frequencies stay coherent only when
their scaled angle/curvature parameters nearly coincide; in the large-array
limit the coherence magnitude collapses to a two-parameter chirp integral.
Inside that kernel's main lobe the best-matching grid sample for a path
drifts *linearly* with subcarrier frequency in both coordinates, which the
drift tables below tabulate once per grid so estimators can follow a path
across the whole band.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .channel import SPEED_OF_LIGHT, SystemConfig
from .polar import PolarGrid

_QUAD_ORDERS = (65, 129, 257, 513, 1025, 2049)
_QUAD_TOL = 1e-8
_quad_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _quad_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order not in _quad_cache:
        nodes, weights = leggauss(order)
        # rescale [-1, 1] -> [-1/2, 1/2]
        _quad_cache[order] = (nodes / 2, weights / 2)
    return _quad_cache[order]


def _chirp_integral(gamma: np.ndarray, zeta: np.ndarray, order: int) -> np.ndarray:
    x, w = _quad_rule(order)
    g = gamma[..., None]
    z = zeta[..., None]
    vals = np.exp(2j * np.pi * (x * g - x * x * z))
    return np.abs(vals @ w)


def chirp_coherence(gamma, zeta):
    """Magnitude of the unit-interval chirp integral
    | int_{-1/2}^{1/2} exp(j 2 pi x gamma - j 2 pi x^2 zeta) dx |.

    This is the large-array limit of the coherence between two
    quadratic-phase steering vectors whose parameter mismatches are
    gamma (linear) and zeta (quadratic). Even in both arguments, which the
    implementation enforces by folding signs before integrating. Evaluated
    by Gauss-Legendre quadrature, refined until successive orders agree to
    1e-8 (257 points already suffice for |zeta| up to ~100).

    Accepts scalars or arrays (broadcast together); returns matching shape.
    """
    g = np.abs(np.asarray(gamma, dtype=float))
    z = np.abs(np.asarray(zeta, dtype=float))
    g, z = np.broadcast_arrays(g, z)
    est = _chirp_integral(g, z, _QUAD_ORDERS[0])
    for order in _QUAD_ORDERS[1:]:
        refined = _chirp_integral(g, z, order)
        done = np.max(np.abs(refined - est)) < _QUAD_TOL
        est = refined
        if done and order >= 257:
            break
    est = np.clip(est, 0.0, 1.0)
    if est.ndim == 0:
        return float(est)
    return est


def steering_coherence(cfg: SystemConfig, sin_angle_1: float, curvature_1: float,
                       freq_1: float, sin_angle_2: float, curvature_2: float,
                       freq_2: float) -> float:
    """Finite-N coherence |(1/N) sum_n exp(j phi_n)| between two
    quadratic-phase steering vectors; the brute-force counterpart of
    :func:`chirp_coherence`.

    The sum runs over the symmetric element offsets with
    phi_n = (2 pi n d / lambda_1)(s1 - (f2/f1) s2)
          - (2 pi n^2 d^2 / lambda_1)(c1 - (f2/f1) c2).
    """
    lam1 = SPEED_OF_LIGHT / freq_1
    ratio = freq_2 / freq_1
    nd = cfg.element_offsets * cfg.antenna_spacing
    phase = (2 * np.pi * nd / lam1) * (sin_angle_1 - ratio * sin_angle_2) \
        - (2 * np.pi * nd**2 / lam1) * (curvature_1 - ratio * curvature_2)
    return float(np.abs(np.mean(np.exp(1j * phase))))


@dataclass
class PatternTables:
    """Per-subcarrier support drift maps over a polar grid (0-based indices).

    ``angle[k, m]`` is the grid angle index nearest to (f_m/f_c) * angles[k];
    ``distance[r, m]`` is the ring nearest to (f_m/f_c) * curvatures[r].
    At the subcarrier equal to the carrier both maps are the identity.
    Arguments scaled past the grid edge clamp to the boundary index (physical
    angles do not alias here), and ties break toward the lower index.
    """

    angle: np.ndarray
    distance: np.ndarray

    @property
    def num_subcarriers(self) -> int:
        return self.angle.shape[1]

    def is_identity(self) -> bool:
        na, m = self.angle.shape
        nd = self.distance.shape[0]
        return bool(
            np.all(self.angle == np.arange(na)[:, None])
            and np.all(self.distance == np.arange(nd)[:, None])
        )


def _nearest_map(grid_values: np.ndarray, ratios: np.ndarray) -> np.ndarray:
    """For each (value, ratio) return argmin_n |grid[n] - ratio*value|, ties low."""
    out = np.empty((grid_values.size, ratios.size), dtype=np.intp)
    for m, ratio in enumerate(ratios):
        targets = ratio * grid_values
        out[:, m] = np.argmin(np.abs(grid_values[None, :] - targets[:, None]), axis=1)
    return out


def build_pattern_tables(cfg: SystemConfig, grid: PolarGrid) -> PatternTables:
    """Tabulate the angle and ring drift maps for every subcarrier."""
    ratios = cfg.subcarrier_freqs / cfg.carrier_freq
    return PatternTables(
        angle=_nearest_map(grid.angles, ratios),
        distance=_nearest_map(grid.curvatures, ratios),
    )


def identity_tables(grid: PolarGrid, num_subcarriers: int) -> PatternTables:
    """Drift-free tables (every subcarrier keeps the carrier support)."""
    return PatternTables(
        angle=np.tile(np.arange(grid.num_angles)[:, None], (1, num_subcarriers)),
        distance=np.tile(np.arange(grid.num_rings)[:, None], (1, num_subcarriers)),
    )


def coherence_heatmap(gamma_values: np.ndarray, zeta_values: np.ndarray) -> np.ndarray:
    """Evaluate the chirp coherence on a (zeta, gamma) grid for dumping/plotting."""
    g, z = np.meshgrid(np.asarray(gamma_values, float), np.asarray(zeta_values, float))
    return chirp_coherence(g, z)
