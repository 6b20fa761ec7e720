"""BSS-Eval-Zerlegung und SDR/SIR/SAR.

Die Schätzung wird orthogonal auf verzögerte Kopien (bis filter_len − 1
Samples) der Referenzen projiziert. Wie in der Referenzimplementierung wird
die Schätzung dafür um filter_len − 1 Nullen verlängert; alle Anteile haben
die Länge len(est) + filter_len − 1.

Die Normalgleichungen nutzen die Toeplitz-Struktur der Auto- und
Kreuzkorrelationen und werden in doppelter Genauigkeit gelöst.
"""

import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import linalg, signal

CLAMP_DB = 100.0
ENERGY_EPS = 1e-20
COND_PINV = 1e10
COND_SINGULAR = 1e14


@dataclass
class BssDecomposition:
    """Zerlegung est = s_target + e_interf + e_artif."""
    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray
    filter_len: int

    @property
    def estimate(self) -> np.ndarray:
        return self.s_target + self.e_interf + self.e_artif


@dataclass
class BssScores:
    """SDR/SIR/SAR in dB mit Kennzeichnung geklemmter Werte."""
    sdr: float
    sir: float
    sar: float
    sdr_clamped: bool = False
    sir_clamped: bool = False
    sar_clamped: bool = False


def _as_matrix(refs) -> np.ndarray:
    if hasattr(refs, "samples"):
        refs = [refs]
    rows = [np.asarray(getattr(r, "samples", r), dtype=np.float64).reshape(-1) for r in refs]
    return np.stack(rows, axis=0)


def _gram_matrix(refs: np.ndarray, filter_len: int) -> np.ndarray:
    """Block-Toeplitz-Gram-Matrix der verzögerten Referenzkopien."""
    n_src, n = refs.shape
    n_fft = int(2 ** np.ceil(np.log2(n + filter_len - 1)))
    spectra = np.fft.rfft(refs, n=n_fft, axis=1)
    gram = np.zeros((n_src * filter_len, n_src * filter_len))
    for i in range(n_src):
        for j in range(i, n_src):
            corr = np.fft.irfft(np.conj(spectra[i]) * spectra[j], n=n_fft)
            # corr[k] = Σ_m r_i[m] r_j[m+k], Block[a, b] = corr[a − b]
            col = corr[:filter_len]
            row = np.concatenate([corr[:1], corr[-1:-filter_len:-1]])
            block = linalg.toeplitz(col, row)
            gram[i * filter_len:(i + 1) * filter_len, j * filter_len:(j + 1) * filter_len] = block
            gram[j * filter_len:(j + 1) * filter_len, i * filter_len:(i + 1) * filter_len] = block.T
    return gram


def _check_references(refs: np.ndarray) -> None:
    """Referenzen ohne Energie oder linear abhängige Referenzen sind nicht zerlegbar."""
    energy = np.sum(refs ** 2, axis=1)
    if np.any(energy < ENERGY_EPS):
        raise ValueError(f"Projektion singulär: Referenz {int(np.argmin(energy))} ohne Energie")
    cond = np.linalg.cond(refs @ refs.T)
    if not np.isfinite(cond) or cond > COND_SINGULAR:
        raise ValueError(
            f"Projektion singulär (Konditionszahl {cond:.3e}); Referenzen linear abhängig"
        )


def _project(refs: np.ndarray, est: np.ndarray, filter_len: int) -> np.ndarray:
    """Orthogonale Projektion von est auf alle verzögerten Kopien von refs."""
    n_src, n = refs.shape
    length = n + filter_len - 1
    gram = _gram_matrix(refs, filter_len)

    rhs = np.zeros(n_src * filter_len)
    est_padded = np.concatenate([est, np.zeros(filter_len - 1)])
    for i in range(n_src):
        # Σ_m r_i[m] · est[m + d] für d = 0..filter_len−1
        corr = signal.correlate(est_padded, refs[i], mode="full", method="fft")
        rhs[i * filter_len:(i + 1) * filter_len] = corr[n - 1:n - 1 + filter_len]

    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_PINV:
        # schmalbandige Referenzen: Verzögerungen linear abhängig, Projektion bleibt eindeutig
        warnings.warn("Schlecht konditionierte Projektion, nutze Pseudoinverse")
        coeffs = linalg.lstsq(gram, rhs)[0]
    else:
        coeffs = linalg.solve(gram, rhs, assume_a="pos")

    projection = np.zeros(length)
    for i in range(n_src):
        taps = coeffs[i * filter_len:(i + 1) * filter_len]
        projection += np.convolve(refs[i], taps)[:length]
    return projection


def bss_decompose(est, refs: Sequence, target_idx: int, filter_len: int = 512) -> BssDecomposition:
    """
    Zerlegt eine Schätzung in Ziel-, Interferenz- und Artefaktanteil.

    Args:
        est: geschätztes Signal (Waveform oder Array)
        refs: Liste der Referenzsignale gleicher Länge
        target_idx: Index der Zielreferenz
        filter_len: Anzahl erlaubter Verzögerungen (Taps)

    Returns:
        BssDecomposition
    """
    if filter_len < 1:
        raise ValueError(f"filter_len muss mindestens 1 sein: {filter_len}")
    est = np.asarray(getattr(est, "samples", est), dtype=np.float64).reshape(-1)
    refs = _as_matrix(refs)
    if refs.shape[1] != len(est):
        raise ValueError(
            f"Länge der Schätzung ({len(est)}) und der Referenzen ({refs.shape[1]}) verschieden"
        )
    if not 0 <= target_idx < refs.shape[0]:
        raise ValueError(f"target_idx {target_idx} außerhalb von [0, {refs.shape[0]})")
    _check_references(refs)

    est_padded = np.concatenate([est, np.zeros(filter_len - 1)])
    p_target = _project(refs[target_idx:target_idx + 1], est, filter_len)
    p_all = _project(refs, est, filter_len) if refs.shape[0] > 1 else p_target

    s_target = p_target
    e_interf = p_all - p_target
    e_artif = est_padded - p_all
    return BssDecomposition(s_target, e_interf, e_artif, filter_len)


def _ratio_db(num: float, den: float) -> Tuple[float, bool]:
    """10·log10(num/den) mit Klemmung auf ±100 dB."""
    if num < ENERGY_EPS:
        return -CLAMP_DB, True
    if den < ENERGY_EPS:
        return CLAMP_DB, True
    value = 10.0 * np.log10(num / den)
    if abs(value) > CLAMP_DB:
        return float(np.sign(value) * CLAMP_DB), True
    return float(value), False


def _sdr(d: BssDecomposition) -> Tuple[float, bool]:
    return _ratio_db(np.sum(d.s_target ** 2), np.sum((d.e_interf + d.e_artif) ** 2))


def _sir(d: BssDecomposition) -> Tuple[float, bool]:
    return _ratio_db(np.sum(d.s_target ** 2), np.sum(d.e_interf ** 2))


def _sar(d: BssDecomposition) -> Tuple[float, bool]:
    return _ratio_db(np.sum((d.s_target + d.e_interf) ** 2), np.sum(d.e_artif ** 2))


def sdr(d: BssDecomposition) -> float:
    return _sdr(d)[0]


def sir(d: BssDecomposition) -> float:
    return _sir(d)[0]


def sar(d: BssDecomposition) -> float:
    return _sar(d)[0]


def bss_scores(d: BssDecomposition) -> BssScores:
    """Alle drei Maße inklusive Klemmungs-Kennzeichen; Werte wie sdr(), sir(), sar()."""
    (sdr_db, sdr_c), (sir_db, sir_c), (sar_db, sar_c) = _sdr(d), _sir(d), _sar(d)
    return BssScores(sdr_db, sir_db, sar_db, sdr_c, sir_c, sar_c)
