"""Pilot observation through random analog combiners, plus noise pre-whitening.

Each pilot slot p applies an N_RF x N analog combiner to the antenna snapshot,
so after P slots the receiver holds P*N_RF linear measurements per subcarrier.
Because the per-antenna noise is combined along with the signal, the stacked
noise is colored with block-diagonal covariance sigma^2 blockdiag{A_p A_p^H};
pre-whitening restores a white-noise model before any greedy correlation.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import SystemConfig, WidebandChannel
from .errors import NumericalError
from .polar import PolarDictionary

_EIG_FLOOR = 1e-10


@dataclass
class MeasurementEnsemble:
    """Combiners and (once prewhitening ran) whitening products.

    ``combiners`` has shape (P, N_RF, N); ``stacked`` is the (P*N_RF) x N
    vertical stack. The whitener is block-diagonal and stored per block, as
    the Hermitian square root of each A_p A_p^H; ``psi`` / ``psi_far`` hold
    the whitened sensing matrices for the polar and far-field dictionaries.
    """

    cfg: SystemConfig
    combiners: np.ndarray
    stacked: np.ndarray = field(repr=False)
    whitener_blocks: np.ndarray | None = field(default=None, repr=False)
    whitener_inv_blocks: np.ndarray | None = field(default=None, repr=False)
    psi: np.ndarray | None = field(default=None, repr=False)
    psi_far: np.ndarray | None = field(default=None, repr=False)
    dictionary: PolarDictionary | None = field(default=None, repr=False)
    angle_dictionary: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_slots(self) -> int:
        return self.combiners.shape[0]

    @property
    def num_rf(self) -> int:
        return self.combiners.shape[1]

    @property
    def num_measurements(self) -> int:
        return self.num_slots * self.num_rf

    def whiten(self, mat: np.ndarray) -> np.ndarray:
        """Apply the inverse whitener block-by-block to a (P*N_RF) x K matrix."""
        if self.whitener_inv_blocks is None:
            raise RuntimeError("whitener not computed yet; call prewhiten first")
        p, nrf = self.num_slots, self.num_rf
        blocks = mat.reshape(p, nrf, -1)
        out = np.einsum("pij,pjk->pik", self.whitener_inv_blocks, blocks)
        return out.reshape(p * nrf, -1)


@dataclass
class ObservationSet:
    """Raw and (after prewhitening) whitened measurements, one column per subcarrier."""

    raw: np.ndarray
    sigma: float
    whitened: np.ndarray | None = field(default=None, repr=False)


def sample_combiners(cfg: SystemConfig, num_slots: int, num_rf: int,
                     rng: np.random.Generator, kind: str = "rademacher"
                     ) -> MeasurementEnsemble:
    """Draw the per-slot analog combiners.

    ``rademacher`` entries are i.i.d. uniform on {-1/sqrt(N), +1/sqrt(N)};
    ``qpsk`` uses uniform quarter-turn phases of the same magnitude. Pilot
    symbols are fixed to 1, so the combiners fully describe the observation.
    """
    if num_slots < 1 or num_rf < 1:
        raise ValueError("num_slots and num_rf must be positive")
    if num_slots * num_rf > cfg.num_antennas:
        raise ValueError("total measurements P*N_RF may not exceed N")
    n = cfg.num_antennas
    scale = 1 / np.sqrt(n)
    if kind == "rademacher":
        comb = scale * rng.choice([-1.0, 1.0], size=(num_slots, num_rf, n))
        comb = comb.astype(complex)
    elif kind == "qpsk":
        quarter = rng.integers(0, 4, size=(num_slots, num_rf, n))
        comb = scale * np.exp(1j * np.pi / 2 * quarter)
    else:
        raise ValueError(f"unknown combiner kind {kind!r}")
    return MeasurementEnsemble(cfg=cfg, combiners=comb,
                               stacked=comb.reshape(num_slots * num_rf, n))


def observe(ens: MeasurementEnsemble, channel: WidebandChannel | np.ndarray,
            sigma: float, rng: np.random.Generator) -> ObservationSet:
    """Measure Y = A H + stacked combined noise, noise ~ CN(0, sigma^2 I_N) per slot.

    sigma = 0 yields exact noiseless measurements. The noise enters through
    the combiners, hence the colored covariance handled by :func:`prewhiten`.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    h = channel.matrix if isinstance(channel, WidebandChannel) else np.asarray(channel)
    p, nrf, n = ens.combiners.shape
    m = h.shape[1]
    noise = (rng.standard_normal((p, n, m)) + 1j * rng.standard_normal((p, n, m)))
    noise *= sigma / np.sqrt(2)
    combined = np.einsum("pij,pjm->pim", ens.combiners, noise).reshape(p * nrf, m)
    return ObservationSet(raw=ens.stacked @ h + combined, sigma=sigma)


def sigma_for_snr(ens: MeasurementEnsemble, channel: WidebandChannel | np.ndarray,
                  snr_db: float, convention: str = "whitened") -> float:
    """Noise amplitude hitting a target SNR for the given channel realization.

    The default convention defines SNR as ||H||_F^2 over the expected
    whitened-noise energy sigma^2 * M * P * N_RF. The ``precombining``
    alternative measures noise energy at the antennas instead
    (sigma^2 * M * P * N).
    """
    h = channel.matrix if isinstance(channel, WidebandChannel) else np.asarray(channel)
    energy = float(np.linalg.norm(h) ** 2)
    if energy == 0:
        raise ValueError("channel energy is zero; SNR undefined")
    if snr_db == np.inf:
        return 0.0
    m = h.shape[1]
    if convention == "whitened":
        dof = m * ens.num_measurements
    elif convention == "precombining":
        dof = m * ens.num_slots * ens.cfg.num_antennas
    else:
        raise ValueError(f"unknown SNR convention {convention!r}")
    return float(np.sqrt(energy / (dof * 10 ** (snr_db / 10))))


def _hermitian_sqrt_blocks(combiners: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot Hermitian square roots of A_p A_p^H and their inverses.

    The square root is the unique positive-definite one, so assembling the
    blocks reproduces the square root of the full block-diagonal matrix
    independent of any eigenvector convention.
    """
    p, nrf, _ = combiners.shape
    roots = np.empty((p, nrf, nrf), dtype=complex)
    inv_roots = np.empty_like(roots)
    for i in range(p):
        gram = combiners[i] @ combiners[i].conj().T
        eigvals, eigvecs = np.linalg.eigh(gram)
        if eigvals.min() < _EIG_FLOOR:
            raise NumericalError(
                f"combiner block {i} is rank deficient (min eigenvalue {eigvals.min():.3e})")
        roots[i] = (eigvecs * np.sqrt(eigvals)) @ eigvecs.conj().T
        inv_roots[i] = (eigvecs / np.sqrt(eigvals)) @ eigvecs.conj().T
    return roots, inv_roots


def prewhiten(ens: MeasurementEnsemble, obs: ObservationSet,
              pdict: PolarDictionary | None = None,
              angle_dict: np.ndarray | None = None) -> ObservationSet:
    """Whiten the observations and build the whitened sensing matrices.

    Computes (and caches on the ensemble) the block Hermitian square root
    D of blockdiag{A_p A_p^H}, which never needs sigma: D^-1 C D^-H equals
    sigma^2 I for the colored covariance C. Fills ``obs.whitened`` and, when
    dictionaries are supplied, ``ens.psi`` / ``ens.psi_far``.
    """
    if ens.whitener_inv_blocks is None:
        ens.whitener_blocks, ens.whitener_inv_blocks = _hermitian_sqrt_blocks(ens.combiners)
    if pdict is not None and ens.psi is None:
        ens.dictionary = pdict
        ens.psi = ens.whiten(ens.stacked @ pdict.matrix)
    if angle_dict is not None and ens.psi_far is None:
        ens.angle_dictionary = angle_dict
        ens.psi_far = ens.whiten(ens.stacked @ angle_dict)
    obs.whitened = ens.whiten(obs.raw)
    return obs
