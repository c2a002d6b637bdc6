"""Channel estimators: drift-aware bilinear pattern detection plus the
classical baselines (least squares, OMP/SOMP in the angle and polar domains,
and the angle-only drift-aware variant).

All greedy estimators share one tie-break rule (lowest flat index wins) and
one restricted least-squares solver, so the documented reductions hold
bit-for-bit: bilinear detection with drift-free tables equals polar SOMP,
the angle-only variant with a drift-free angle table equals angle SOMP, and
SOMP on a single subcarrier equals OMP.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import NMSE_DB_FLOOR, WidebandChannel
from .errors import NumericalError
from .measurement import MeasurementEnsemble, ObservationSet
from .pattern import PatternTables

# Effective-rank cutoff for the column-pivoted solve: condition estimates
# beyond 1/_RANK_RCOND trigger the ridge fallback.
_RANK_RCOND = 1e-10
_RIDGE_SCALE = 1e-6


@dataclass
class SupportSet:
    """Detected supports: carrier-level entries plus their per-subcarrier
    flat column indices (0-based).

    ``carrier`` holds (angle_index, ring) pairs for polar-domain estimators
    and bare angle indices for angle-domain ones; ``per_subcarrier[m]`` is the
    sorted, deduplicated flat index set used in the subcarrier-m fit.
    """

    carrier: list | None
    per_subcarrier: list | None = None


@dataclass
class EstimateReport:
    """One estimator run: the channel estimate plus run diagnostics.

    ``residual_norms`` tracks the Frobenius norm of the residue across greedy
    iterations (entry 0 is the whitened observation itself), and
    ``max_ls_defect`` is the worst relative orthogonality defect of any
    restricted least-squares fit. Both back the run-time invariant checks.
    """

    label: str
    channel: np.ndarray
    support: SupportSet | None
    walltime_s: float
    residual_norms: list = field(default_factory=list)
    max_ls_defect: float = 0.0
    ridge_count: int = 0


def nmse_linear(h: np.ndarray | WidebandChannel, h_hat: np.ndarray) -> float:
    """Linear-scale normalized squared error ||H - Hhat||_F^2 / ||H||_F^2."""
    mat = h.matrix if isinstance(h, WidebandChannel) else np.asarray(h)
    energy = float(np.linalg.norm(mat) ** 2)
    if energy == 0:
        raise ValueError("true channel has zero energy; NMSE undefined")
    return float(np.linalg.norm(mat - h_hat) ** 2) / energy


def nmse(h: np.ndarray | WidebandChannel, h_hat: np.ndarray) -> float:
    """NMSE in dB, floored at -100 dB for (numerically) exact estimates."""
    ratio = nmse_linear(h, h_hat)
    if ratio == 0:
        return NMSE_DB_FLOOR
    return max(NMSE_DB_FLOOR, float(10 * np.log10(ratio)))


def _solve_columns(mat: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares via column-pivoted orthogonal factorization.

    Tall/square systems go through a pivoted QR with rank detection on the
    triangular diagonal; fat systems (support larger than the measurement
    count) use the minimum-norm LAPACK path. Numerically rank-deficient
    supports (condition estimate beyond 1e10) fall back to ridge-regularized
    normal equations.
    """
    rows, cols = mat.shape
    if cols <= rows:
        q, r, piv = scipy.linalg.qr(mat, mode="economic", pivoting=True)
        diag = np.abs(np.diagonal(r))
        if diag.size and diag[0] > 0 and diag[-1] >= _RANK_RCOND * diag[0]:
            sol_pivoted = scipy.linalg.solve_triangular(r, q.conj().T @ rhs,
                                                        lower=False)
            sol = np.empty_like(sol_pivoted)
            sol[piv] = sol_pivoted
            return sol, False
    else:
        sol, _, rank, _ = scipy.linalg.lstsq(mat, rhs, cond=_RANK_RCOND,
                                             lapack_driver="gelsy")
        if rank == rows:
            return sol, False
    lam = _RIDGE_SCALE * float(np.max(np.sum(np.abs(mat) ** 2, axis=0), initial=0.0))
    gram = mat.conj().T @ mat
    gram[np.diag_indices_from(gram)] += lam
    try:
        sol = np.linalg.solve(gram, mat.conj().T @ rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("restricted least squares failed even with ridge") from exc
    return sol, True


def _restricted_fit(psi: np.ndarray, ybar: np.ndarray, supports: list):
    """Fit each column of ybar on its support columns of psi.

    Subcarriers sharing a support are solved in one batched call (they often
    all do, e.g. for common-support estimators). Returns the group list
    [(support, columns, coefficients)], the residue matrix, the worst relative
    orthogonality defect among plain LS solves, and the ridge-fallback count.
    """
    residual = np.empty_like(ybar)
    grouped: dict[bytes, tuple[np.ndarray, list]] = {}
    for j, sup in enumerate(supports):
        grouped.setdefault(sup.tobytes(), (sup, []))[1].append(j)
    groups = []
    max_defect = 0.0
    ridge_count = 0
    for sup, cols in grouped.values():
        mat = psi[:, sup]
        rhs = ybar[:, cols]
        coef, used_ridge = _solve_columns(mat, rhs)
        res = rhs - mat @ coef
        residual[:, cols] = res
        groups.append((sup, cols, coef))
        if used_ridge:
            ridge_count += 1
        else:
            defect = np.abs(mat.conj().T @ res)
            norms = np.maximum(np.linalg.norm(rhs, axis=0), np.finfo(float).tiny)
            max_defect = max(max_defect, float(np.max(defect / norms, initial=0.0)))
    return groups, residual, max_defect, ridge_count


def _assemble(synth: np.ndarray, groups: list, num_cols: int) -> np.ndarray:
    """Expand grouped sparse coefficients through a synthesis matrix."""
    out = np.zeros((synth.shape[0], num_cols), dtype=complex)
    for sup, cols, coef in groups:
        out[:, cols] = synth[:, sup] @ coef
    return out


def _require_whitened(ens: MeasurementEnsemble, obs: ObservationSet, far: bool):
    psi = ens.psi_far if far else ens.psi
    synth = ens.angle_dictionary if far else (
        ens.dictionary.matrix if ens.dictionary is not None else None)
    if psi is None or synth is None or obs.whitened is None:
        raise RuntimeError("prewhiten(ens, obs, ...) with the needed dictionary "
                           "must run before greedy estimation")
    return psi, synth, obs.whitened


def _pattern_gather_index(tables: PatternTables) -> np.ndarray:
    """Flat gather index (N_d, N_a, M): drift-mapped column of each pair at m."""
    na = tables.angle.shape[0]
    return tables.distance[:, None, :] * na + tables.angle[None, :, :]


class _Greedy:
    """Shared state for one greedy run: residue, selection mask, diagnostics."""

    def __init__(self, psi, ybar, num_detect, psi_h=None):
        if num_detect < 1:
            raise ValueError("num_detect must be at least 1")
        if num_detect > psi.shape[1]:
            raise ValueError("num_detect exceeds the number of dictionary atoms")
        self.psi = psi
        # hot-loop reuse; callers running many pursuits share one copy
        self.psi_h = np.ascontiguousarray(psi.conj().T) if psi_h is None else psi_h
        self.ybar = ybar
        self.num_detect = num_detect
        self.residual = ybar.copy()
        self.taken = np.zeros(psi.shape[1], dtype=bool)
        self.residual_norms = [float(np.linalg.norm(ybar))]
        self.max_defect = 0.0
        self.ridge_count = 0
        self.groups = []

    def correlation_power(self) -> np.ndarray:
        u = self.psi_h @ self.residual
        return np.abs(u) ** 2

    def pick(self, scores: np.ndarray, mask_index=None) -> int:
        """Argmax with already-taken candidates excluded; first (lowest) index
        wins ties."""
        scores = scores.reshape(-1).copy()
        taken = self.taken if mask_index is None else mask_index
        scores[taken] = -np.inf
        return int(np.argmax(scores))

    def refit(self, supports: list):
        self.groups, self.residual, defect, ridge = _restricted_fit(
            self.psi, self.ybar, supports)
        self.max_defect = max(self.max_defect, defect)
        self.ridge_count += ridge
        self.residual_norms.append(float(np.linalg.norm(self.residual)))


def estimate_bpd(ens: MeasurementEnsemble, obs: ObservationSet,
                 tables: PatternTables, num_detect: int) -> EstimateReport:
    """Bilinear-drift-aware greedy estimation over the polar dictionary.

    Each iteration correlates the residue with every atom, accumulates the
    squared correlation of each carrier-level (angle, ring) pair along its
    drift trajectory across all subcarriers, picks the strongest pair, maps
    the pair set into per-subcarrier supports, refits those supports by least
    squares, and recomputes the residue. The final coefficients are expanded
    through the polar dictionary.
    """
    t0 = time.perf_counter()
    psi, synth, ybar = _require_whitened(ens, obs, far=False)
    grid = ens.dictionary.grid
    na, nd = grid.num_angles, grid.num_rings
    m = ybar.shape[1]
    if tables.angle.shape != (na, m) or tables.distance.shape != (nd, m):
        raise ValueError("pattern tables do not match the grid/observation shape")
    gather = _pattern_gather_index(tables)
    m_index = np.arange(m)[None, None, :]
    state = _Greedy(psi, ybar, num_detect)
    pair_mask = np.zeros(na * nd, dtype=bool)
    sel_angle: list[int] = []
    sel_ring: list[int] = []
    supports = None
    for _ in range(num_detect):
        power = state.correlation_power()
        accumulated = power[gather, m_index].sum(axis=2)
        pick = state.pick(accumulated, mask_index=pair_mask)
        pair_mask[pick] = True
        ring, angle_index = divmod(pick, na)
        sel_angle.append(angle_index)
        sel_ring.append(ring)
        ai = np.asarray(sel_angle)
        ri = np.asarray(sel_ring)
        supports = [np.unique(tables.distance[ri, j] * na + tables.angle[ai, j])
                    for j in range(m)]
        state.refit(supports)
    channel = _assemble(synth, state.groups, m)
    support = SupportSet(carrier=list(zip(sel_angle, sel_ring)), per_subcarrier=supports)
    return EstimateReport("bpd", channel, support, time.perf_counter() - t0,
                          state.residual_norms, state.max_defect, state.ridge_count)


def estimate_bspd(ens: MeasurementEnsemble, obs: ObservationSet,
                  tables: PatternTables, num_detect: int) -> EstimateReport:
    """Angle-only drift-aware baseline over the far-field dictionary.

    Identical greedy loop to :func:`estimate_bpd` but with the distance
    dimension absent: power accumulates along the angle drift map only, and
    per-subcarrier supports are the drift-mapped angle indices.
    """
    t0 = time.perf_counter()
    psi, synth, ybar = _require_whitened(ens, obs, far=True)
    m = ybar.shape[1]
    if tables.angle.shape != (psi.shape[1], m):
        raise ValueError("angle table does not match the far-field dictionary")
    state = _Greedy(psi, ybar, num_detect)
    selected: list[int] = []
    supports = None
    for _ in range(num_detect):
        power = state.correlation_power()
        accumulated = np.take_along_axis(power, tables.angle, axis=0).sum(axis=1)
        pick = state.pick(accumulated)
        state.taken[pick] = True
        selected.append(pick)
        si = np.asarray(selected)
        supports = [np.unique(tables.angle[si, j]) for j in range(m)]
        state.refit(supports)
    channel = _assemble(synth, state.groups, m)
    support = SupportSet(carrier=list(selected), per_subcarrier=supports)
    return EstimateReport("bspd", channel, support, time.perf_counter() - t0,
                          state.residual_norms, state.max_defect, state.ridge_count)


def _somp(psi: np.ndarray, synth: np.ndarray, ybar: np.ndarray,
          num_detect: int, as_pairs_of: int | None = None) -> tuple:
    state = _Greedy(psi, ybar, num_detect)
    m = ybar.shape[1]
    selected: list[int] = []
    supports = None
    for _ in range(num_detect):
        power = state.correlation_power()
        row_power = power.sum(axis=1)
        pick = state.pick(row_power)
        state.taken[pick] = True
        selected.append(pick)
        sup = np.unique(np.asarray(selected))
        supports = [sup] * m
        state.refit(supports)
    channel = _assemble(synth, state.groups, m)
    if as_pairs_of is not None:
        carrier = [(int(i % as_pairs_of), int(i // as_pairs_of)) for i in selected]
    else:
        carrier = list(selected)
    return channel, SupportSet(carrier=carrier, per_subcarrier=supports), state


def estimate_polar_somp(ens: MeasurementEnsemble, obs: ObservationSet,
                        num_detect: int) -> EstimateReport:
    """Common-support greedy recovery over the polar dictionary (row power
    summed across subcarriers; no drift model)."""
    t0 = time.perf_counter()
    psi, synth, ybar = _require_whitened(ens, obs, far=False)
    channel, support, state = _somp(psi, synth, ybar, num_detect,
                                    as_pairs_of=ens.dictionary.grid.num_angles)
    return EstimateReport("polar_somp", channel, support, time.perf_counter() - t0,
                          state.residual_norms, state.max_defect, state.ridge_count)


def estimate_angle_somp(ens: MeasurementEnsemble, obs: ObservationSet,
                        num_detect: int) -> EstimateReport:
    """Common-support greedy recovery over the far-field angle dictionary."""
    t0 = time.perf_counter()
    psi, synth, ybar = _require_whitened(ens, obs, far=True)
    channel, support, state = _somp(psi, synth, ybar, num_detect)
    return EstimateReport("angle_somp", channel, support, time.perf_counter() - t0,
                          state.residual_norms, state.max_defect, state.ridge_count)


def _omp_columns(label: str, psi: np.ndarray, synth: np.ndarray, ybar: np.ndarray,
                 num_detect: int) -> EstimateReport:
    """Independent per-subcarrier greedy pursuit (no cross-frequency coupling)."""
    t0 = time.perf_counter()
    m = ybar.shape[1]
    channel = np.zeros((synth.shape[0], m), dtype=complex)
    per_sub = []
    norm_history = np.zeros((m, num_detect + 1))
    max_defect = 0.0
    ridge_count = 0
    psi_h = np.ascontiguousarray(psi.conj().T)
    for j in range(m):
        y = ybar[:, j:j + 1]
        state = _Greedy(psi, y, num_detect, psi_h=psi_h)
        selected: list[int] = []
        sup = None
        for _ in range(num_detect):
            power = state.correlation_power()
            row_power = power.sum(axis=1)
            pick = state.pick(row_power)
            state.taken[pick] = True
            selected.append(pick)
            sup = np.unique(np.asarray(selected))
            state.refit([sup])
        channel[:, j:j + 1] = _assemble(synth, state.groups, 1)
        per_sub.append(sup)
        norm_history[j] = state.residual_norms
        max_defect = max(max_defect, state.max_defect)
        ridge_count += state.ridge_count
    residual_norms = list(np.sqrt((norm_history ** 2).sum(axis=0)))
    support = SupportSet(carrier=None, per_subcarrier=per_sub)
    return EstimateReport(label, channel, support, time.perf_counter() - t0,
                          residual_norms, max_defect, ridge_count)


def estimate_polar_omp(ens: MeasurementEnsemble, obs: ObservationSet,
                       num_detect: int) -> EstimateReport:
    """Per-subcarrier OMP over the polar dictionary."""
    psi, synth, ybar = _require_whitened(ens, obs, far=False)
    return _omp_columns("polar_omp", psi, synth, ybar, num_detect)


def estimate_angle_omp(ens: MeasurementEnsemble, obs: ObservationSet,
                       num_detect: int) -> EstimateReport:
    """Per-subcarrier OMP over the far-field angle dictionary."""
    psi, synth, ybar = _require_whitened(ens, obs, far=True)
    return _omp_columns("angle_omp", psi, synth, ybar, num_detect)


def estimate_ls(ens: MeasurementEnsemble, obs: ObservationSet) -> EstimateReport:
    """Per-subcarrier minimum-norm least squares on the raw, unwhitened system."""
    t0 = time.perf_counter()
    channel = np.linalg.pinv(ens.stacked) @ obs.raw
    return EstimateReport("ls", channel, None, time.perf_counter() - t0)
