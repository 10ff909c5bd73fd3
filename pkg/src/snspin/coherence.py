"""Phonon-limited coherence of the broker and memory qubits.

Between orbital branches, thermally activated phonon hopping samples
two slightly different qubit splittings.  The dephasing is set by the
effective splitting difference lambda_eff of each qubit: for the broker
qubit the difference is first order in the in-plane strain and second
order in the transverse hyperfine coupling, while for the memory qubit
(nuclear-like at second order) it vanishes identically -- the origin of
the memory's orders-of-magnitude longer coherence.

The sign of the strain parameter upsilon relative to the spin-orbit
splitting is not known experimentally; map generation therefore treats
it as a convention: the opposite-sign case contains a zero of lambda_B
(a ridge of diverging T2), the same-sign case does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ManifoldParams, GAMMA_PHONON_1P7K


@dataclass(frozen=True)
class CoherenceParams:
    """Inter-branch phonon scattering input for the T2 formula.

    ``gamma_phonon`` is a direct calibration input per temperature (the
    formula uses it literally); ``temperature_k`` is metadata only.
    """

    gamma_phonon: float = GAMMA_PHONON_1P7K
    temperature_k: float = 1.7

    def __post_init__(self):
        if not self.gamma_phonon >= 0:
            raise ValueError("gamma_phonon must be >= 0")


def lambda_eff(params: ManifoldParams) -> tuple:
    """Branch-to-branch splitting difference (broker, memory) in Hz.

    lambda_B = 2 upsilon c + (A_perp^2 / (2 Delta)) c^2 with
    c = lambda_soc / Delta and Delta the total orbital splitting; the
    memory term cancels at this order, so lambda_M is exactly zero.
    The sign of lambda_B follows the formula; the dephasing rate only
    depends on its magnitude.
    """
    delta = params.delta_total
    if delta <= 0:
        raise ValueError("orbital splitting must be positive")
    c_hat = params.lambda_soc / delta
    lam_b = 2.0 * params.upsilon_ioc * c_hat + (
        params.a_perp ** 2 / (2.0 * delta)
    ) * c_hat ** 2
    return lam_b, 0.0


def t2_phonon(lambda_b_hz: float, coherence: CoherenceParams | None = None) -> float:
    """Hopping-limited T2 (s) of a qubit with splitting difference lambda_b.

    T2 = 4 pi / (lambda_b (1 - exp(-2 pi / (lambda_b gamma)))) with the
    phonon hopping parameter gamma.  Slow hopping (lambda_b gamma <<
    2 pi) gives the static limit 4 pi / lambda_b; fast hopping gives
    2 gamma.  A vanishing lambda_b means no phonon dephasing at all
    (infinite T2).
    """
    coherence = coherence or CoherenceParams()
    gamma = coherence.gamma_phonon
    if gamma <= 0:
        raise ValueError("gamma_phonon must be positive for a finite T2")
    lam = abs(lambda_b_hz)
    if lam == 0.0:
        return math.inf
    return 4.0 * math.pi / (lam * -math.expm1(-2.0 * math.pi / (lam * gamma)))


def ridge_upsilon(lambda_soc_hz: float, a_perp_hz: float, alpha_hz: float) -> float:
    """Strain value maximizing broker T2 at fixed spin-orbit and Jahn-Teller.

    The hyperfine and strain contributions to lambda_B cancel at
    upsilon = -A_perp^2 lambda_soc / (4 Delta^2), which requires
    upsilon and lambda_soc of opposite sign.
    """
    delta = math.hypot(lambda_soc_hz, 2.0 * alpha_hz)
    if delta <= 0:
        raise ValueError("orbital splitting must be positive")
    return -(a_perp_hz ** 2) * lambda_soc_hz / (4.0 * delta ** 2)


@dataclass(frozen=True)
class CoherenceMap:
    """Broker T2 over a (strain, Jahn-Teller) grid, with the ridge track.

    ``upsilon_hz`` holds the signed strain values actually evaluated;
    ``ridge_upsilon_hz`` is the analytic lambda_B zero per alpha (only
    meaningful for the opposite-sign convention).
    """

    upsilon_hz: np.ndarray
    alpha_hz: np.ndarray
    t2_s: np.ndarray               # shape (n_upsilon, n_alpha)
    ridge_upsilon_hz: np.ndarray   # analytic ridge position per alpha
    sign_convention: str

    def csv_rows(self) -> list:
        rows = [("upsilon_hz", "alpha_hz", "t2_s")]
        for i, u in enumerate(self.upsilon_hz):
            for j, a in enumerate(self.alpha_hz):
                rows.append((repr(float(u)), repr(float(a)), repr(float(self.t2_s[i, j]))))
        return rows


def coherence_map(base: ManifoldParams, upsilon_grid, alpha_grid,
                  sign_convention: str = "opposite",
                  coherence: CoherenceParams | None = None) -> CoherenceMap:
    """Broker T2 versus in-plane strain magnitude and Jahn-Teller coupling.

    ``upsilon_grid``/``alpha_grid`` are magnitudes; ``sign_convention``
    selects whether upsilon opposes ("opposite", the high-coherence
    ridge case) or follows ("same") the sign of the spin-orbit
    splitting.  Every grid point reuses ``base`` with its strain and
    Jahn-Teller amplitude replaced (the x component carries all of
    alpha).
    """
    if sign_convention not in ("opposite", "same"):
        raise ValueError("sign_convention must be 'opposite' or 'same'")
    upsilon_grid = np.asarray(upsilon_grid, dtype=float)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    if upsilon_grid.size == 0 or alpha_grid.size == 0:
        raise ValueError("grids must be non-empty")
    if np.any(upsilon_grid < 0) or np.any(alpha_grid < 0):
        raise ValueError("grids are magnitudes; signs come from sign_convention")
    coherence = coherence or CoherenceParams()
    sign = -1.0 if sign_convention == "opposite" else 1.0
    signed_ups = sign * math.copysign(1.0, base.lambda_soc) * upsilon_grid

    t2 = np.empty((upsilon_grid.size, alpha_grid.size))
    for j, alpha in enumerate(alpha_grid):
        for i, ups in enumerate(signed_ups):
            p = ManifoldParams(
                lambda_soc=base.lambda_soc,
                upsilon_ioc=float(ups),
                a_par=base.a_par,
                a_perp=base.a_perp,
                strain_egx=float(alpha),
                strain_egy=0.0,
                orbital_quench_q=base.orbital_quench_q,
                g_electron=base.g_electron,
                nuclear_gyro=base.nuclear_gyro,
            )
            lam_b, _ = lambda_eff(p)
            t2[i, j] = t2_phonon(lam_b, coherence)
    ridge = np.array([
        ridge_upsilon(base.lambda_soc, base.a_perp, float(a)) for a in alpha_grid
    ])
    return CoherenceMap(signed_ups, alpha_grid, t2, ridge, sign_convention)


__all__ = [
    "CoherenceParams", "lambda_eff", "t2_phonon", "ridge_upsilon",
    "CoherenceMap", "coherence_map",
]
