"""Truncated Fock-space simulator used as an independent oracle.

Single-mode operators live on ``span{|0>, ..., |dim-1>}``.  Multimode
operators live on a truncated tensor product whose basis is

    {k in Z^n : 0 <= k_i < dims_i and, optionally, k_1 + ... + k_n <= cutoff}

listed in lexicographic order.  Without ``cutoff`` the basis is the plain
tensor product (so :func:`tensor` is a Kronecker product).  With a total
photon cap every beam splitter acts inside the space exactly, because
passive unitaries conserve the total photon number; this is what makes
three-mode checks fit in memory.

Dense work is guarded by the ``QGT_MAX_BYTES`` environment variable
(default 2 GiB).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .distributions import GaussianParams, NumberPmf, total_count_cutoff

__all__ = [
    "FockSpace",
    "FockOperator",
    "TruncationReport",
    "TruncationError",
    "MemoryEnvelopeError",
    "ProductState",
    "annihilation",
    "number_operator",
    "coherent_state",
    "gaussian_state",
    "gaussian_block",
    "mean_shift",
    "phase_shift",
    "beam_splitter",
    "pair_rotation",
    "mode_permutation",
    "PassiveNetwork",
    "network",
    "concentrator_network",
    "concentrator",
    "splitter_network",
    "concentrator_steps",
    "splitter_two_sample",
    "product_state",
    "tensor",
    "trace_against",
    "trace_norm",
    "phase_average",
    "core_test_operator",
    "run_composed",
]

DEFAULT_MAX_BYTES = 2 ** 31


class TruncationError(RuntimeError):
    """The truncated state loses more probability than allowed."""


class MemoryEnvelopeError(MemoryError):
    """A dense allocation would exceed ``QGT_MAX_BYTES``."""


def _guard(nbytes: float, what: str):
    limit = int(os.environ.get("QGT_MAX_BYTES", DEFAULT_MAX_BYTES))
    if nbytes > limit:
        raise MemoryEnvelopeError(
            f"{what} needs {nbytes / 2**20:.0f} MiB, above QGT_MAX_BYTES={limit}")


@dataclass(frozen=True)
class TruncationReport:
    """Probability lost to truncation.

    ``dim`` is the single-mode dimension or, for multimode spaces, the
    number of basis states; ``cutoff`` is the total photon cap if any.
    """

    leakage: float
    dim: int
    cutoff: int | None = None


# ---------------------------------------------------------------------------
# Spaces and operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FockSpace:
    """Truncated multimode Fock space."""

    dims: tuple
    cutoff: int | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or min(dims) < 1:
            raise ValueError("dims must be positive")
        object.__setattr__(self, "dims", dims)
        if self.cutoff is not None:
            object.__setattr__(self, "cutoff", int(self.cutoff))

    @classmethod
    def single(cls, dim: int) -> "FockSpace":
        return cls((dim,))

    @classmethod
    def capped(cls, n_modes: int, cutoff: int) -> "FockSpace":
        """``n_modes`` modes with at most ``cutoff`` photons in total."""
        return cls((cutoff + 1,) * n_modes, cutoff)

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    @cached_property
    def basis(self) -> np.ndarray:
        """Occupation numbers, one row per basis state."""
        occ = np.zeros((1, 0), dtype=np.int64)
        tot = np.zeros(1, dtype=np.int64)
        for d in self.dims:
            if self.cutoff is None:
                counts = np.full(len(occ), d)
            else:
                counts = np.minimum(d, self.cutoff - tot + 1)
            rows = np.repeat(np.arange(len(occ)), counts)
            vals = np.concatenate([np.arange(c) for c in counts])
            occ = np.column_stack([occ[rows], vals])
            tot = tot[rows] + vals
        return occ

    @property
    def size(self) -> int:
        return len(self.basis)

    @cached_property
    def _strides(self) -> np.ndarray:
        s = np.ones(self.n_modes, dtype=np.int64)
        for i in range(self.n_modes - 2, -1, -1):
            s[i] = s[i + 1] * self.dims[i + 1]
        return s

    @cached_property
    def _codes(self) -> np.ndarray:
        return self.basis @ self._strides

    def index(self, occupations) -> np.ndarray:
        """Basis positions of the given occupation rows."""
        occ = np.atleast_2d(np.asarray(occupations, dtype=np.int64))
        codes = occ @ self._strides
        pos = np.searchsorted(self._codes, codes)
        pos = np.minimum(pos, self.size - 1)
        if not np.array_equal(self._codes[pos], codes):
            raise KeyError("occupation outside the truncated space")
        return pos

    @cached_property
    def totals(self) -> np.ndarray:
        return self.basis.sum(axis=1)

    def sectors(self):
        """Yield ``(S, indices)`` for each total photon number ``S``."""
        order = np.argsort(self.totals, kind="stable")
        tot = self.totals[order]
        cuts = np.flatnonzero(np.diff(tot)) + 1
        for block in np.split(order, cuts):
            yield int(self.totals[block[0]]), block


_KINDS = ("operator", "unitary", "density", "test")


class FockOperator:
    """Matrix on a :class:`FockSpace`.

    Parameters
    ----------
    space : FockSpace
    data : ndarray or scipy sparse matrix
    kind : {"operator", "unitary", "density", "test"}
        Tag checked at construction: unitaries must satisfy
        ``max|U^H U - I| <= 1e-10``; densities must be Hermitian with
        trace at most one (and PSD when small enough to diagonalize).
    hermitian : bool
        Hint used by :func:`trace_against`.
    mode_matrix : ndarray, optional
        For passive unitaries, the matrix ``M`` with ``U |a) = |M a)`` on
        coherent amplitude vectors ``a``.
    """

    PSD_CHECK_MAX = 1500

    def __init__(self, space, data, kind="operator", hermitian=False, mode_matrix=None):
        if kind not in _KINDS:
            raise ValueError(f"unknown operator kind {kind!r}")
        if data.shape != (space.size, space.size):
            raise ValueError(f"data shape {data.shape} does not match space size {space.size}")
        self.space = space
        self.data = data
        self.kind = kind
        self.hermitian = hermitian or kind in ("density", "test")
        self.mode_matrix = mode_matrix
        if kind == "unitary":
            self._check_unitary()
        elif kind == "density":
            self._check_density()

    @property
    def dims(self):
        return self.space.dims

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    def dense(self) -> np.ndarray:
        if self.is_sparse:
            _guard(16.0 * self.space.size ** 2, "dense operator")
            return self.data.toarray()
        return np.asarray(self.data)

    def diagonal(self) -> np.ndarray:
        return np.asarray(self.data.diagonal())

    def dagger(self) -> "FockOperator":
        return FockOperator(self.space, self.data.conj().T, "operator", self.hermitian)

    def _check_unitary(self):
        U = self.data
        if self.is_sparse:
            D = (U.conj().T @ U - sp.identity(U.shape[0], format="csr")).tocoo()
            err = np.abs(D.data).max() if D.nnz else 0.0
        else:
            err = np.abs(U.conj().T @ U - np.eye(U.shape[0])).max()
        if err > 1e-10:
            raise ValueError(f"operator tagged unitary deviates by {err:.2e}")

    def _check_density(self):
        rho = self.dense()
        if np.abs(rho - rho.conj().T).max() > 1e-10:
            raise ValueError("density is not Hermitian")
        tr = np.trace(rho).real
        if tr > 1 + 1e-10:
            raise ValueError(f"density trace {tr} exceeds one")
        if self.space.size <= self.PSD_CHECK_MAX:
            if np.linalg.eigvalsh(rho).min() < -1e-10:
                raise ValueError("density is not positive semidefinite")

    def conjugate(self, rho: "FockOperator") -> "FockOperator":
        """Return ``U rho U^H`` for this operator ``U``."""
        if rho.space != self.space:
            raise ValueError("space mismatch")
        U = self.data
        R = rho.dense()
        _guard(3 * 16.0 * self.space.size ** 2, "conjugation")
        out = U @ R
        out = (U.conj() @ out.conj().T).conj().T if self.is_sparse else out @ U.conj().T
        out = 0.5 * (out + out.conj().T)
        return FockOperator(rho.space, np.asarray(out), rho.kind)

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        if other.space != self.space:
            raise ValueError("space mismatch")
        kind = "unitary" if self.kind == other.kind == "unitary" else "operator"
        mm = None
        if self.mode_matrix is not None and other.mode_matrix is not None:
            mm = self.mode_matrix @ other.mode_matrix
        data = self.data @ other.data
        if sp.issparse(data):
            data = data.tocsr()
        return FockOperator(self.space, data, kind, mode_matrix=mm)


# ---------------------------------------------------------------------------
# Single-mode operators and states
# ---------------------------------------------------------------------------


def annihilation(dim: int) -> FockOperator:
    """Lowering operator with ``<k-1|a|k> = sqrt(k)``."""
    if dim < 2:
        raise ValueError("dim must be at least 2")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    return FockOperator(FockSpace.single(dim), a)


def number_operator(dim: int) -> FockOperator:
    return FockOperator(FockSpace.single(dim), np.diag(np.arange(dim, dtype=complex)), hermitian=True)


def _expm_antihermitian(G: np.ndarray) -> np.ndarray:
    # exp(G) with G = -iK, K Hermitian: diagonalize K.
    w, V = np.linalg.eigh(1j * G)
    return (V * np.exp(-1j * w)) @ V.conj().T


def mean_shift(theta: complex, dim: int) -> FockOperator:
    """``W_theta = exp(theta a^H - conj(theta) a)`` on the truncated space.

    The exponential of the truncated generator is exactly unitary; its
    matrix elements agree with the infinite-dimensional displacement only
    well below ``dim``.
    """
    a = annihilation(dim).data
    G = complex(theta) * a.conj().T - complex(theta).conjugate() * a
    return FockOperator(FockSpace.single(dim), _expm_antihermitian(G), "unitary")


def phase_shift(t: float, dim: int) -> FockOperator:
    """``S_t = exp(i t a^H a)``."""
    return FockOperator(FockSpace.single(dim), np.diag(np.exp(1j * t * np.arange(dim))), "unitary")


def _coherent_amplitudes(xi: complex, dim: int) -> np.ndarray:
    xi = complex(xi)
    k = np.arange(dim)
    if xi == 0:
        amp = np.zeros(dim, dtype=complex)
        amp[0] = 1.0
        return amp
    logmag = -0.5 * abs(xi) ** 2 + k * math.log(abs(xi)) - 0.5 * np.array([math.lgamma(j + 1) for j in k])
    return np.exp(logmag) * np.exp(1j * k * np.angle(xi))


def coherent_state(xi: complex, dim: int, max_leakage: float = 1e-8):
    """Projector onto the coherent state ``|xi)`` truncated to ``dim`` levels.

    Returns
    -------
    rho : FockOperator
        Density with kind ``"density"`` (not renormalized).
    report : TruncationReport
    """
    amp = _coherent_amplitudes(xi, dim)
    leak = NumberPmf(GaussianParams(xi, 0.0)).survival(dim - 1)
    if leak > max_leakage:
        raise TruncationError(f"coherent state |{xi}) leaks {leak:.2e} at dim={dim}")
    rho = np.outer(amp, amp.conj())
    return FockOperator(FockSpace.single(dim), rho, "density"), TruncationReport(leak, dim)


def _work_dim(p: GaussianParams, dim: int) -> int:
    # Room above the kept block so that the truncated exponential is
    # accurate there; the kept block already covers the state's tail.
    return dim + 30 + int(math.ceil(6 * abs(p.theta)))


def gaussian_block(p: GaussianParams, dim: int, work_dim: int | None = None) -> np.ndarray:
    """Dense matrix of ``rho_{theta,N}`` on the first ``dim`` levels.

    Built as ``W_theta diag(geometric(N)) W_theta^H`` on a larger working
    space, then cropped.
    """
    D = work_dim or _work_dim(p, dim)
    N = p.n_param
    if N == 0:
        diag = np.zeros(D)
        diag[0] = 1.0
    else:
        k = np.arange(D)
        diag = np.exp(-math.log1p(N) - k * math.log1p(1.0 / N))
    if p.theta == 0:
        rho = np.diag(diag).astype(complex)
    else:
        W = mean_shift(p.theta, D).data
        rho = (W * diag) @ W.conj().T
    rho = rho[:dim, :dim]
    return 0.5 * (rho + rho.conj().T)


def gaussian_state(p: GaussianParams, dim: int, max_leakage: float = 1e-8):
    """Truncated density of the Gaussian state ``p``.

    Returns
    -------
    rho : FockOperator
    report : TruncationReport
        ``leakage = 1 - Tr rho``.
    """
    rho = gaussian_block(p, dim)
    leak = max(0.0, 1.0 - float(np.trace(rho).real))
    if leak > max_leakage:
        raise TruncationError(f"Gaussian state {p} leaks {leak:.2e} at dim={dim}")
    return FockOperator(FockSpace.single(dim), rho, "density"), TruncationReport(leak, dim)


# ---------------------------------------------------------------------------
# Passive multimode unitaries
# ---------------------------------------------------------------------------


def _rotation_block(t: float, c: int) -> np.ndarray:
    """Action of ``exp(t (a_i^H a_j - a_j^H a_i))`` on ``|p, c-p>``, p = 0..c."""
    G = np.zeros((c + 1, c + 1))
    for p in range(c):
        # a_i^H a_j |p, c-p> = sqrt((p+1)(c-p)) |p+1, c-p-1>
        v = math.sqrt((p + 1) * (c - p))
        G[p + 1, p] = v
        G[p, p + 1] = -v
    return scipy.linalg.expm(t * G)


def _rotation_matrix(n_modes: int, i: int, j: int, t: float) -> np.ndarray:
    R = np.eye(n_modes, dtype=complex)
    c, s = math.cos(t), math.sin(t)
    R[i, i], R[i, j], R[j, i], R[j, j] = c, s, -s, c
    return R


def pair_rotation(space: FockSpace, i: int, j: int, t: float) -> FockOperator:
    """Beam splitter ``exp(t (a_i^H a_j - a_j^H a_i))`` between modes i and j.

    On coherent inputs it maps amplitudes ``(a_i, a_j)`` to
    ``(a_i cos t + a_j sin t, -a_i sin t + a_j cos t)``.  The space must
    carry a total photon cap so that the operator is exact there.
    """
    if space.cutoff is None or min(space.dims[i], space.dims[j]) <= space.cutoff:
        raise ValueError("beam splitters need a photon-capped space (see FockSpace.capped)")
    if i == j:
        raise ValueError("beam splitter needs two distinct modes")
    occ = space.basis
    ki, kj = occ[:, i], occ[:, j]
    csum = ki + kj
    rows, cols, vals = [], [], []
    for c in np.unique(csum):
        c = int(c)
        block = _rotation_block(t, c)
        sel = np.nonzero(csum == c)[0]
        p = ki[sel]
        for q in range(c + 1):
            target = occ[sel].copy()
            target[:, i] = q
            target[:, j] = c - q
            rows.append(space.index(target))
            cols.append(sel)
            vals.append(block[q, p])
    data = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.size, space.size), dtype=complex)
    data.eliminate_zeros()
    return FockOperator(space, data, "unitary", mode_matrix=_rotation_matrix(space.n_modes, i, j, t))


def beam_splitter(t: float, dimA: int, dimB: int) -> FockOperator:
    """Two-mode beam splitter on ``{k_A + k_B <= min(dimA, dimB) - 1}``."""
    return pair_rotation(FockSpace.capped(2, min(dimA, dimB) - 1), 0, 1, t)


def mode_permutation(space: FockSpace, perm) -> FockOperator:
    """Relabel modes: output mode ``a`` carries input mode ``perm[a]``."""
    perm = list(perm)
    if sorted(perm) != list(range(space.n_modes)):
        raise ValueError("perm must be a permutation of the modes")
    if len(set(space.dims)) > 1:
        raise ValueError("mode permutations need equal per-mode dims")
    occ = space.basis
    rows = space.index(occ[:, perm])
    cols = np.arange(space.size)
    data = sp.csr_matrix((np.ones(space.size, dtype=complex), (rows, cols)),
                         shape=(space.size, space.size))
    M = np.zeros((space.n_modes, space.n_modes), dtype=complex)
    M[np.arange(space.n_modes), perm] = 1.0
    return FockOperator(space, data, "unitary", mode_matrix=M)


class PassiveNetwork:
    """Product of sparse passive unitaries kept as separate factors.

    Multiplying the factors out fills every photon-number sector densely,
    so conjugations apply them one at a time instead.

    Parameters
    ----------
    space : FockSpace
    factors : list of FockOperator
        Unitaries in the order they act (first factor acts first).
    """

    def __init__(self, space: FockSpace, factors):
        self.space = space
        self.factors = list(factors)
        for f in self.factors:
            if f.space != space or f.kind != "unitary":
                raise ValueError("network factors must be unitaries on the same space")

    def then(self, other) -> "PassiveNetwork":
        """Network applying ``self`` first and then ``other``."""
        more = other.factors if isinstance(other, PassiveNetwork) else [other]
        return PassiveNetwork(self.space, self.factors + list(more))

    @property
    def mode_matrix(self) -> np.ndarray:
        M = np.eye(self.space.n_modes, dtype=complex)
        for f in self.factors:
            M = f.mode_matrix @ M
        return M

    def conjugate_block(self, rho: np.ndarray, idx=None) -> np.ndarray:
        """``U rho U^H`` restricted to the basis positions ``idx``.

        ``idx`` must be a union of photon-number sectors, on which every
        factor is block diagonal.
        """
        for f in self.factors:
            B = f.data if idx is None else f.data[idx][:, idx]
            rho = B @ rho
            rho = (B.conj() @ rho.conj().T).conj().T
        return rho

    def conjugate(self, rho: FockOperator) -> FockOperator:
        if rho.space != self.space:
            raise ValueError("space mismatch")
        _guard(3 * 16.0 * self.space.size ** 2, "conjugation")
        out = self.conjugate_block(rho.dense())
        out = 0.5 * (out + out.conj().T)
        return FockOperator(self.space, np.asarray(out), rho.kind)

    def materialize(self) -> FockOperator:
        """Multiply the factors into one sparse unitary."""
        # the product is dense inside each photon-number sector
        fill = sum(len(idx) ** 2 for _, idx in self.space.sectors())
        _guard(3 * 32.0 * fill, "materialized network")
        U = FockOperator(self.space, sp.identity(self.space.size, dtype=complex, format="csr"),
                         "unitary", mode_matrix=np.eye(self.space.n_modes, dtype=complex))
        for f in self.factors:
            U = f @ U
        return U


def network(space: FockSpace, steps) -> PassiveNetwork:
    """Pair rotations ``(i, j, t)``; the first step acts first."""
    return PassiveNetwork(space, [pair_rotation(space, i, j, t) for i, j, t in steps])


def concentrator_steps(modes) -> list:
    """Pair rotations of the concentrating operator on ``modes``.

    The last two modes are merged first; afterwards the fresh mode
    ``modes[k]`` (first slot) is merged with the running mode
    ``modes[k+1]`` (second slot) that holds ``sqrt(j) theta``, using
    ``cos t = 1/sqrt(j+1)`` and ``sin t = sqrt(j/(j+1))``.  The result
    concentrates ``sqrt(n) theta`` on ``modes[0]``.
    """
    modes = list(modes)
    n = len(modes)
    steps = []
    for j in range(1, n):
        k = n - 1 - j
        steps.append((modes[k], modes[k + 1], math.atan(math.sqrt(j))))
    return steps


def concentrator_network(space: FockSpace) -> PassiveNetwork:
    """Concentrating operator on all modes of ``space``."""
    return network(space, concentrator_steps(range(space.n_modes)))


def concentrator(n: int, dim_each: int) -> FockOperator:
    """Concentrating operator ``U_n`` on ``n`` modes with total cap ``dim_each - 1``."""
    if n < 1:
        raise ValueError("n must be positive")
    return concentrator_network(FockSpace.capped(n, dim_each - 1)).materialize()


def splitter_network(space: FockSpace, m: int, n: int, variant: str) -> PassiveNetwork:
    """Two-sample splitter on ``space`` (first ``m`` modes hold theta).

    ``"U3"`` concentrates each sample, leaving ``sqrt(m) theta`` on mode 0
    and ``sqrt(n) eta`` on mode 1.  ``"U2"`` additionally mixes those two
    modes so that mode 0 carries ``(m theta + n eta)/sqrt(m+n)`` and mode 1
    carries ``sqrt(mn/(m+n)) (theta - eta)``.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if variant not in ("U2", "U3"):
        raise ValueError("variant must be 'U2' or 'U3'")
    if space.n_modes != m + n:
        raise ValueError("space must have m + n modes")
    steps = concentrator_steps(range(m)) + concentrator_steps(range(m, m + n))
    net = network(space, steps)
    order = [0, m] + [k for k in range(1, m + n) if k != m]
    net = net.then(mode_permutation(space, order))
    if variant == "U2":
        # eta-mode first, theta-mode second, then put the sum on mode 0
        net = net.then(pair_rotation(space, 1, 0, math.atan(math.sqrt(m / n))))
        net = net.then(mode_permutation(space, [1, 0] + list(range(2, m + n))))
    return net


def splitter_two_sample(m: int, n: int, variant: str, dim_each: int) -> FockOperator:
    """Materialized :func:`splitter_network` with total cap ``dim_each - 1``."""
    return splitter_network(FockSpace.capped(m + n, dim_each - 1), m, n, variant).materialize()


# ---------------------------------------------------------------------------
# Multimode states and traces
# ---------------------------------------------------------------------------


def product_state(blocks, space: FockSpace) -> FockOperator:
    """Tensor product of single-mode densities restricted to ``space``.

    ``blocks`` are dense single-mode matrices with at least ``dims[i]``
    levels.
    """
    if len(blocks) != space.n_modes:
        raise ValueError("one block per mode is needed")
    _guard(2 * 16.0 * space.size ** 2, "product state")
    occ = space.basis
    rho = np.ones((space.size, space.size), dtype=complex)
    for i, b in enumerate(blocks):
        b = np.asarray(b)
        rho *= b[np.ix_(occ[:, i], occ[:, i])]
    return FockOperator(space, rho, "density")


def tensor(*ops: FockOperator) -> FockOperator:
    """Kronecker product of operators on uncapped spaces."""
    if any(op.space.cutoff is not None for op in ops):
        raise ValueError("tensor needs uncapped spaces")
    dims = sum((op.space.dims for op in ops), ())
    space = FockSpace(dims)
    _guard(16.0 * space.size ** 2, "tensor product")
    data = ops[0].dense()
    for op in ops[1:]:
        data = np.kron(data, op.dense())
    kind = "unitary" if all(op.kind == "unitary" for op in ops) else "operator"
    return FockOperator(space, data, kind)


def trace_against(rho: FockOperator, T: FockOperator) -> float:
    """``Tr(rho T)``; test operators are checked to satisfy ``0 <= T <= I``."""
    if rho.space != T.space:
        raise ValueError(f"dimension mismatch: {rho.dims} vs {T.dims}")
    if T.kind == "test":
        if T.is_sparse and (T.data - sp.diags(T.diagonal())).nnz == 0:
            ev = T.diagonal().real
        elif T.space.size <= FockOperator.PSD_CHECK_MAX:
            ev = np.linalg.eigvalsh(T.dense())
        else:
            ev = np.array([0.0])
        if ev.min() < -1e-10 or ev.max() > 1 + 1e-10:
            raise ValueError("test operator is not between 0 and I")
    if T.is_sparse:
        val = (T.data.multiply(rho.dense().T)).sum()
    else:
        val = np.sum(rho.dense() * T.dense().T)
    val = complex(val)
    if rho.hermitian and T.hermitian:
        if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
            raise ValueError(f"trace has imaginary part {val.imag:.2e}")
        return val.real
    return val


def trace_norm(A: np.ndarray, exact_max: int = 600) -> tuple[float, bool]:
    """Trace norm of a Hermitian matrix, or an upper bound.

    Returns ``(value, exact)``.  Above ``exact_max`` rows the bound
    ``sqrt(dim) * ||A||_F`` is returned instead of diagonalizing.
    """
    A = np.asarray(A)
    if A.shape[0] <= exact_max:
        return float(np.abs(np.linalg.eigvalsh(A)).sum()), True
    return float(math.sqrt(A.shape[0]) * np.linalg.norm(A)), False


def phase_average(T: FockOperator, grid: int, mode: int = 0) -> FockOperator:
    """Average ``S_t T S_t^H`` over ``t = 2 pi j / grid`` on one mode.

    For ``grid`` at least twice the mode's dimension this equals the
    average over the whole circle and removes every matrix element
    between different photon numbers of that mode.
    """
    if grid < 2 * T.space.dims[mode]:
        raise ValueError("grid must be at least twice the mode dimension")
    k = T.space.basis[:, mode]
    A = T.dense()
    out = np.zeros_like(A, dtype=complex)
    for j in range(grid):
        ph = np.exp(2j * math.pi * j / grid * k)
        out += A * np.outer(ph, ph.conj())
    out /= grid
    return FockOperator(T.space, out, "test" if T.kind == "test" else "operator", T.hermitian)


# ---------------------------------------------------------------------------
# Composed tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProductState:
    """Product of single-mode Gaussian states, one entry per mode."""

    modes: tuple

    @classmethod
    def iid(cls, p: GaussianParams, n: int) -> "ProductState":
        return cls((p,) * n)

    @classmethod
    def two_sample(cls, p: GaussianParams, m: int, q: GaussianParams, n: int) -> "ProductState":
        return cls((p,) * m + (q,) * n)


def _pre_network(pre, space: FockSpace) -> PassiveNetwork:
    if pre.name == "concentrator":
        return concentrator_network(space)
    if pre.name in ("split2", "split3"):
        return splitter_network(space, pre.m, pre.n, "U2" if pre.name == "split2" else "U3")
    raise ValueError(f"unknown pre-unitary {pre.name!r}")


def core_test_operator(ct, space: FockSpace) -> FockOperator:
    """The core test of ``ct`` as a diagonal operator on ``space``."""
    phi = ct.phi(space.basis)
    return FockOperator(space, sp.diags(phi.astype(complex), format="csr"), "test")


def run_composed(ct, state: ProductState, cutoff: int | None = None, leak_budget: float = 1e-8):
    """Evaluate ``Tr(rho U^H (T x I) U)`` for a composed test.

    Parameters
    ----------
    ct : ComposedTest
    state : ProductState
    cutoff : int, optional
        Total photon cap.  By default the smallest cap with a certified
        leakage below ``leak_budget / 10``.
    leak_budget : float

    Returns
    -------
    value : float
        Rejection probability.
    report : TruncationReport
    """
    modes = list(state.modes)
    if len(modes) != ct.n_modes:
        raise ValueError(f"{ct.problem} acts on {ct.n_modes} modes, state has {len(modes)}")
    pre = ct.pre_unitary
    if pre.name == "shift":
        after = [GaussianParams(p.theta + s, p.n_param) for p, s in zip(modes, pre.shifts)]
    else:
        after = modes
    if cutoff is None:
        cutoff = max(total_count_cutoff(modes, leak_budget / 10),
                     total_count_cutoff(after, leak_budget / 10))
    space = FockSpace.capped(len(modes), cutoff)
    dim = cutoff + 1
    T = core_test_operator(ct, space)

    if pre.name == "shift":
        diags = []
        for p, s in zip(modes, pre.shifts):
            # room above the kept block for the shift to move mass through
            D = _work_dim(GaussianParams(s, 0.0), dim)
            rho_w = gaussian_block(p, D)
            if s != 0:
                W = mean_shift(s, D).data
                rho_w = W @ rho_w @ W.conj().T
            diags.append(np.real(np.diag(rho_w))[:dim])
        occ = space.basis
        diag = np.ones(space.size)
        for i, d in enumerate(diags):
            diag *= d[occ[:, i]]
    else:
        blocks = [gaussian_block(p, dim) for p in modes]
        net = _pre_network(pre, space)
        occ = space.basis
        diag = np.zeros(space.size)
        for _, idx in space.sectors():
            _guard(3 * 16.0 * len(idx) ** 2, "sector block")
            rho = np.ones((len(idx), len(idx)), dtype=complex)
            for i, b in enumerate(blocks):
                oi = occ[idx, i]
                rho *= b[np.ix_(oi, oi)]
            diag[idx] = np.real(np.diag(net.conjugate_block(rho, idx)))
    value = float(np.dot(diag, T.diagonal().real))
    leak = max(0.0, 1.0 - float(diag.sum()))
    if leak > leak_budget:
        raise TruncationError(f"leakage {leak:.2e} above budget {leak_budget:.0e} at cutoff {cutoff}")
    return value, TruncationReport(leak, space.size, cutoff)
