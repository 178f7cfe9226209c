"""Node signatures: m-sequence generation and signature-matrix algebra.

Signatures are cyclic shifts of a single maximal-length sequence. A set of
K shifts of a length-L m-sequence has pairwise normalized cross-correlation
-1/L, which is what the decorrelator, ZF and MMOE correlators are built on.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# Feedback taps (exponents of a primitive polynomial, constant term implied).
# x^3 + x + 1 -> (3, 1), and so on.
PRIMITIVE_TAPS = {
    2: (2, 1),
    3: (3, 1),
    4: (4, 1),
    5: (5, 2),
    6: (6, 1),
    7: (7, 1),
    8: (8, 6, 5, 4),
    9: (9, 4),
    10: (10, 3),
}

COND_LIMIT = 1e12


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def _lfsr_states(degree, taps, seed):
    """Run a Fibonacci LFSR; returns output bits and the number of distinct states."""
    state = list(seed)
    period = 2**degree - 1
    seen = set()
    bits = []
    for _ in range(period):
        key = tuple(state)
        if key in seen:
            break
        seen.add(key)
        bits.append(state[-1])
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
    return bits, len(seen)


def gen_msequence(degree, taps=None, seed=None):
    """Generate one period of an m-sequence as a +/-1 chip array.

    ``taps`` lists the exponents of the feedback polynomial (degree included);
    ``seed`` is the initial register content, most recent bit first. Bits map
    0 -> +1, 1 -> -1.
    """
    if degree < 2:
        raise ValueError("degree must be >= 2")
    if taps is None:
        if degree not in PRIMITIVE_TAPS:
            raise ValueError(f"no default primitive polynomial for degree {degree}")
        taps = PRIMITIVE_TAPS[degree]
    taps = tuple(int(t) for t in taps)
    if degree not in taps or any(t < 1 or t > degree for t in taps):
        raise ValueError(f"invalid taps {taps} for degree {degree}")
    if seed is None:
        seed = (1,) + (0,) * (degree - 1)
    seed = tuple(int(s) & 1 for s in seed)
    if len(seed) != degree:
        raise ValueError("seed length must equal degree")
    if not any(seed):
        raise ValueError("seed register must be nonzero")

    bits, n_states = _lfsr_states(degree, taps, seed)
    if n_states < 2**degree - 1:
        raise ValueError(
            f"taps {taps} are not primitive: period {n_states} < {2**degree - 1}"
        )
    return 1 - 2 * np.asarray(bits, dtype=int)


def cyclic_autocorrelation(chips):
    chips = np.asarray(chips)
    return np.array([int(np.dot(chips, np.roll(chips, lag))) for lag in range(len(chips))])


@dataclass(frozen=True)
class SignatureSet:
    """L x K signature matrix with unit-norm columns.

    ``chips`` holds the raw +/-1 chips (L x K); ``S`` is chips / sqrt(L).
    """

    chips: np.ndarray
    S: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        chips = np.asarray(self.chips, dtype=float)
        if chips.ndim != 2:
            raise ValueError("chips must be an L x K array")
        if not np.all(np.abs(chips) == 1):
            raise ValueError("chips must be +/-1")
        chips.setflags(write=False)
        S = chips / np.sqrt(chips.shape[0])
        S.setflags(write=False)
        object.__setattr__(self, "chips", chips)
        object.__setattr__(self, "S", S)

    @property
    def L(self):
        return self.S.shape[0]

    @property
    def K(self):
        return self.S.shape[1]

    @cached_property
    def gram(self):
        return self.S.T @ self.S

    @cached_property
    def gram_inv(self):
        if np.linalg.cond(self.gram) > COND_LIMIT:
            raise SingularMatrixError("signature matrix is rank deficient")
        return _spd_inverse(self.gram)

    @property
    def noise_enhancement(self):
        """Diagonal of (S^T S)^-1."""
        return np.diag(self.gram_inv).copy()

    @cached_property
    def pinv(self):
        return decorrelator(self)

    def column(self, i):
        return self.S[:, i]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"node{k + 1}" for k in range(self.K)])
            for row in self.chips.astype(int):
                w.writerow(row.tolist())

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array([[int(v) for v in r] for r in rows[1:]], dtype=float))


def _spd_inverse(A):
    inv_c = np.linalg.solve(np.linalg.cholesky(A), np.eye(A.shape[0]))
    return inv_c.T.conj() @ inv_c


def build_signature_set(base, K):
    """Columns are the first K cyclic shifts of ``base``, scaled to unit norm."""
    base = np.asarray(base)
    L = len(base)
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > L:
        raise ValueError(f"K={K} exceeds sequence length {L}")
    chips = np.stack([np.roll(base, k) for k in range(K)], axis=1)
    return SignatureSet(chips)


def paper_signatures(K=6, degree=3):
    """Length-7 m-sequence set used for the fully loaded 7-node network."""
    return build_signature_set(gen_msequence(degree), K)


def decorrelator(sig):
    """Pseudo-inverse S+ = (S^T S)^-1 S^T of a tall full-rank signature matrix."""
    S = sig.S if isinstance(sig, SignatureSet) else np.asarray(sig, dtype=float)
    G = S.conj().T @ S
    if np.linalg.cond(G) > COND_LIMIT:
        raise SingularMatrixError("signature matrix is rank deficient")
    return np.linalg.solve(G, S.conj().T)


def projector_out(sig, i):
    """Projector onto the orthogonal complement of the columns other than i."""
    S = sig.S
    others = np.delete(S, i, axis=1)
    L = S.shape[0]
    if others.shape[1] == 0:
        return np.eye(L)
    return np.eye(L) - others @ decorrelator(others)


def _check_index(sig, i):
    if not 0 <= i < sig.K:
        raise IndexError(f"node index {i} out of range for K={sig.K}")


def mf_correlator(sig, i):
    _check_index(sig, i)
    return sig.S[:, i].copy()


def zf_correlator(sig, i):
    """c = P_i s_i; orthogonal to every other signature, c^T s_i = 1/(S^T S)^-1_ii."""
    _check_index(sig, i)
    return projector_out(sig, i) @ sig.S[:, i]


def expected_nu_sq(eps, M0):
    """E[nu^2] for nu ~ Binomial(M0, eps)."""
    eps = np.asarray(eps, dtype=float)
    return M0 * eps * (1 - eps) + (M0 * eps) ** 2


def output_covariance(sig, fading_power, eps, noise_power, M0):
    """M_yy = sum_k 2 sigma_k^2 E[nu_k^2] s_k s_k^T + 2 N0 M0 I."""
    S = sig.S
    w = np.asarray(fading_power, dtype=float) * expected_nu_sq(eps, M0)
    return (S * w) @ S.T + noise_power * M0 * np.eye(sig.L)


def mmoe_correlator(sig, cfg, M0, i=0, normalize=True):
    """MMOE correlator M_yy^-1 s_i for node i given M0 sensing slots.

    With ``normalize`` the distortionless version c / (s_i^T c) is returned, so
    c^T s_i = 1; the decision rule is invariant to this positive scaling but a
    fixed scale keeps thresholds comparable across sessions with different M0.
    """
    _check_index(sig, i)
    if M0 < 1:
        raise ValueError("M0 must be >= 1")
    Myy = output_covariance(sig, cfg.fading_power, cfg.eps[1:], cfg.noise_power, M0)
    if np.linalg.cond(Myy) > COND_LIMIT:
        raise SingularMatrixError("output covariance is singular")
    c = np.linalg.solve(Myy, sig.S[:, i])
    if normalize:
        c = c / (sig.S[:, i] @ c)
    return c


@dataclass(frozen=True)
class CorrelatorBank:
    """Per-node correlators of one kind plus cached Gram quantities."""

    kind: str
    C: np.ndarray  # L x K, column i is c_i
    gram: np.ndarray
    gram_inv_diag: np.ndarray

    def statistic(self, ysum):
        """|c_i^T y|^2 for every node; ``ysum`` may carry leading batch dims."""
        return np.abs(np.asarray(ysum) @ self.C.conj()) ** 2

    @property
    def K(self):
        return self.C.shape[1]


def correlator_bank(sig, kind, cfg=None, M0=None):
    kind = kind.upper()
    if kind == "MF":
        C = sig.S.copy()
    elif kind == "ZF":
        C = np.stack([zf_correlator(sig, i) for i in range(sig.K)], axis=1)
    elif kind == "MMOE":
        if cfg is None or M0 is None:
            raise ValueError("MMOE bank needs cfg and M0")
        C = np.stack([mmoe_correlator(sig, cfg, M0, i) for i in range(sig.K)], axis=1)
    else:
        raise ValueError(f"unknown correlator kind {kind!r}")
    return CorrelatorBank(kind, C, sig.gram, sig.noise_enhancement)
