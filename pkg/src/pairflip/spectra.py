"""Spectral gaps, subset expansion, and escape profiles.

The gap is ``1 - |lambda_2|`` with ``lambda_2`` the second-largest
eigenvalue modulus of the transition matrix. Small chains are solved
densely; large ones iteratively with the stationary direction deflated
away. The relaxation time is ``1/gap``; the usual mixing-time relation
``t_mix >= t_rel ln 4`` is left to the caller, it is not computed here.

Expansion of a subset R uses the probability-flow convention

    Phi(R) = sum_{i in R} pi_i sum_{j not in R} T[i, j] / pi(R),

which for the doubly stochastic full chains reduces to the plain
average outflow (1/|R|) sum_{i in R, j notin R} T[i, j].
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .census import cone_stats, sector_dim
from .chains import (
    StochasticChain,
    sector_projectors,
    state_sector_codes,
)
from .errors import NumericError, UsageError
from .walks import SectorId, sector_charge

DENSE_CUTOFF = 4096
DEFAULT_TOL = 1e-10
MAX_ITERATIONS = 10**6

# documented caveat attached to the nonsymmetric iterative path
_SVD_PROXY_NOTE = (
    "singular-value proxy on M M^T: reported gap 1 - sigma_2 "
    "lower-bounds the true eigenvalue gap"
)


@dataclass(frozen=True)
class GapResult:
    """Spectral gap with provenance of the solve."""

    gap: float
    method: str  # "dense" | "iterative"
    residual: float
    iterations: int
    caveat: str | None = None

    @property
    def relaxation_time(self) -> float:
        return 1.0 / self.gap if self.gap > 0 else float("inf")


def _require_irreducible(chain: StochasticChain) -> None:
    # lumped rows are connected by construction; everything that was
    # assembled from raw matrices gets the real check
    if chain.kind == "lumped":
        return
    ncomp, _ = connected_components(chain.matrix, connection="strong")
    if ncomp != 1:
        raise UsageError(
            f"chain is not irreducible ({ncomp} strongly connected components)"
        )


def _dense_gap(mat: np.ndarray) -> GapResult:
    vals, vecs = np.linalg.eig(mat)
    order = np.argsort(-np.abs(vals))
    lam = vals[order[1]]
    x = vecs[:, order[1]]
    residual = float(np.linalg.norm(mat @ x - lam * x) / np.linalg.norm(x))
    mod = abs(lam)
    if mod > 1 + 1e-9:
        raise NumericError(f"subdominant eigenvalue modulus {mod} exceeds 1")
    return GapResult(
        gap=max(1.0 - mod, 0.0), method="dense", residual=residual, iterations=0
    )


class _CountedOperator(spla.LinearOperator):
    def __init__(self, dim: int, apply):
        super().__init__(dtype=np.float64, shape=(dim, dim))
        self._apply = apply
        self.count = 0

    def _matvec(self, x):
        self.count += 1
        return self._apply(np.asarray(x).ravel())


def _iterative_symmetric(
    mat: sp.csr_matrix,
    pi: np.ndarray,
    tol: float,
    max_iterations: int,
) -> tuple[float, float, int]:
    """Largest eigenvalue after deflating the stationary direction.

    ``mat`` must be reversible with respect to ``pi``; the similarity
    ``D^{1/2} T D^{-1/2}`` is then symmetric with top eigenvector
    ``sqrt(pi)``.
    """
    root = np.sqrt(pi)
    dh = sp.diags(root)
    dhi = sp.diags(1.0 / root)
    sym = sp.csr_matrix(dh @ mat @ dhi)
    top = root / np.linalg.norm(root)

    def apply(x: np.ndarray) -> np.ndarray:
        return sym @ x - top * (top @ x)

    op = _CountedOperator(mat.shape[0], apply)
    v0 = np.random.default_rng(0).standard_normal(mat.shape[0])
    try:
        vals, vecs = spla.eigsh(
            op, k=1, which="LA", tol=tol / 10, maxiter=max_iterations, v0=v0
        )
    except spla.ArpackNoConvergence as exc:
        raise NumericError(f"eigensolver did not converge: {exc}") from exc
    lam = float(vals[0])
    x = vecs[:, 0]
    residual = float(np.linalg.norm(apply(x) - lam * x) / np.linalg.norm(x))
    return lam, residual, op.count


def _iterative_singular_proxy(
    mat: sp.csr_matrix, tol: float, max_iterations: int
) -> tuple[float, float, int]:
    """sigma_2^2 of a doubly stochastic matrix via deflated M M^T."""
    dim = mat.shape[0]
    mt = sp.csr_matrix(mat.T)
    top = np.full(dim, 1.0 / np.sqrt(dim))

    def apply(x: np.ndarray) -> np.ndarray:
        return mat @ (mt @ x) - top * (top @ x)

    op = _CountedOperator(dim, apply)
    v0 = np.random.default_rng(0).standard_normal(dim)
    try:
        vals, vecs = spla.eigsh(
            op, k=1, which="LA", tol=tol / 10, maxiter=max_iterations, v0=v0
        )
    except spla.ArpackNoConvergence as exc:
        raise NumericError(f"eigensolver did not converge: {exc}") from exc
    lam = float(vals[0])
    x = vecs[:, 0]
    residual = float(np.linalg.norm(apply(x) - lam * x) / np.linalg.norm(x))
    return lam, residual, op.count


def _compress_nonlocal(chain: StochasticChain) -> tuple[sp.csr_matrix, np.ndarray]:
    """Sector compression S M R of the nonlocal chain.

    Shares every nonzero eigenvalue with the full matrix (AB and BA
    have the same nonzero spectrum), independent of any lumping
    assumption, and is reversible with respect to the sector masses.
    """
    r_mat, s_mat, basis = sector_projectors(chain.n, chain.length)
    comp = sp.csr_matrix((s_mat @ chain.matrix) @ r_mat)
    dims = np.array(
        [sector_dim(chain.n, chain.length, len(s.irr)) for s in basis],
        dtype=float,
    )
    return comp, dims / dims.sum()


def spectral_gap(
    chain: StochasticChain,
    *,
    tol: float = DEFAULT_TOL,
    dense_cutoff: int = DENSE_CUTOFF,
    max_iterations: int = MAX_ITERATIONS,
) -> GapResult:
    """Gap of a chain: dense below the cutoff, deflated Lanczos above.

    Iterative paths: lumped chains and sector compressions of the
    nonlocal chain are symmetrized through their stationary law; the
    nonsymmetric full local chain falls back to a singular-value proxy
    on ``M M^T`` whose result lower-bounds the true gap (see the
    ``caveat`` field). Non-convergence raises instead of returning.
    """
    _require_irreducible(chain)
    if chain.dimension <= dense_cutoff:
        return _dense_gap(chain.matrix.toarray())
    if chain.kind == "lumped":
        lam, residual, count = _iterative_symmetric(
            chain.matrix, chain.stationary, tol, max_iterations
        )
        caveat = None
    elif chain.kind == "nonlocal":
        comp, pi = _compress_nonlocal(chain)
        if comp.shape[0] <= dense_cutoff:
            res = _dense_gap(comp.toarray())
            return GapResult(res.gap, "dense", res.residual, res.iterations)
        lam, residual, count = _iterative_symmetric(comp, pi, tol, max_iterations)
        caveat = None
    else:
        col_drift = np.abs(np.asarray(chain.matrix.sum(axis=0)).ravel() - 1).max()
        if col_drift > 1e-9:
            raise UsageError(
                "iterative gap needs a doubly stochastic or lumped chain"
            )
        lam, residual, count = _iterative_singular_proxy(
            chain.matrix, tol, max_iterations
        )
        lam = np.sqrt(max(lam, 0.0))
        caveat = _SVD_PROXY_NOTE
    if residual > tol:
        raise NumericError(f"eigenpair residual {residual:.3e} above tol {tol:.3e}")
    if lam > 1 + 1e-9:
        raise NumericError(f"subdominant eigenvalue {lam} exceeds 1")
    return GapResult(
        gap=max(1.0 - float(lam), 0.0),
        method="iterative",
        residual=residual,
        iterations=count,
        caveat=caveat,
    )


def _stationary_weights_exact(chain: StochasticChain) -> list[Fraction]:
    if chain.kind == "lumped":
        return [
            Fraction(sector_dim(chain.n, chain.length, len(s.irr)))
            for s in chain.basis
        ]
    return [Fraction(1)] * chain.dimension


def subset_expansion(
    chain: StochasticChain, subset: Sequence[int]
) -> Fraction | float:
    """Probability flow out of a subset per unit stationary mass.

    Exact rational when the chain carries exact rows, float otherwise.
    The subset must be a nonempty proper set of basis indices.
    """
    idx = np.unique(np.asarray(list(subset), dtype=np.int64))
    dim = chain.dimension
    if idx.size == 0 or idx.size >= dim:
        raise UsageError("subset must be nonempty and proper")
    if idx.min() < 0 or idx.max() >= dim:
        raise UsageError("subset indices out of range")
    inside = np.zeros(dim, dtype=bool)
    inside[idx] = True
    if chain.exact_rows is not None:
        weights = _stationary_weights_exact(chain)
        flow = Fraction(0)
        mass = Fraction(0)
        for i in idx:
            w = weights[i]
            mass += w
            for j, p in chain.exact_rows[i].items():
                if not inside[j]:
                    flow += w * p
        return flow / mass
    pi = (
        chain.stationary
        if chain.stationary is not None
        else np.full(dim, 1.0 / dim)
    )
    sub = chain.matrix[idx]
    outflow = np.asarray(sub[:, ~inside].sum(axis=1)).ravel()
    return float(pi[idx] @ outflow / pi[idx].sum())


def _canonical_anchor(depth: int, n: int) -> SectorId:
    syms = tuple(1 if k % 2 == 0 else 2 for k in range(depth - 1))
    return SectorId(syms, n)


def _check_cone_args(n: int, length: int, depth: int) -> None:
    if depth < 2 or depth > length or (length - depth) % 2:
        raise UsageError(
            f"cone depth must satisfy 2 <= d <= L with d == L (mod 2), "
            f"got d={depth}, L={length}"
        )


def cone_subset(
    chain: StochasticChain, depth: int, anchor: SectorId | None = None
) -> np.ndarray:
    """Basis indices of the cone below a depth ``depth-1`` anchor.

    The cone holds every state whose irreducible prefix extends the
    anchor to depth at least ``depth``. Works on full chains (state
    indices) and lumped chains (sector indices). The default anchor
    alternates 1,2,... which is valid for every alphabet.
    """
    n, length = chain.n, chain.length
    if n is None or length is None:
        raise UsageError("cone subsets need a built chain with n and length")
    _check_cone_args(n, length, depth)
    if anchor is None:
        anchor = _canonical_anchor(depth, n)
    if len(anchor.irr) != depth - 1:
        raise UsageError(
            f"anchor depth {len(anchor.irr)} does not match cone depth {depth}"
        )
    if chain.kind == "lumped":
        keep = [
            k
            for k, sec in enumerate(chain.basis)
            if len(sec.irr) >= depth and sec.irr[: depth - 1] == anchor.irr
        ]
        return np.asarray(keep, dtype=np.int64)
    codes, depths = state_sector_codes(n, length)
    bits = n.bit_length()
    acode = 0
    for s in anchor.irr:
        acode = (acode << bits) | s
    deep = depths >= depth
    shift = bits * np.maximum(depths - (depth - 1), 0)
    match = (codes >> shift) == acode
    return np.nonzero(deep & match)[0].astype(np.int64)


def n2_charge_subset(chain: StochasticChain, q: int) -> np.ndarray:
    """Indices with signed two-symbol charge at least ``q``.

    The charge is the difference of the two staggered symbol charges;
    it takes every value of the right parity in ``[-L, L]`` and is
    constant on sectors.
    """
    n, length = chain.n, chain.length
    if n != 2:
        raise UsageError("charge cuts are a two-symbol construction")
    if (length - q) % 2 or not -length <= q <= length:
        raise UsageError(f"charge {q} has wrong parity or range for L={length}")
    if chain.kind == "lumped":
        keep = []
        for k, sec in enumerate(chain.basis):
            val = (
                sector_charge(sec, 1, length).value
                - sector_charge(sec, 2, length).value
            )
            if val >= q:
                keep.append(k)
        return np.asarray(keep, dtype=np.int64)
    total = 2**length
    idx = np.arange(total, dtype=np.int64)
    charge = np.zeros(total, dtype=np.int64)
    power = total
    for i in range(length):
        power //= 2
        digit = (idx // power) % 2  # 0 -> symbol 1, 1 -> symbol 2
        sign = 1 if (i + 1) % 2 == 0 else -1
        charge += sign * (1 - 2 * digit)
    return np.nonzero(charge >= q)[0].astype(np.int64)


@dataclass(frozen=True)
class CheegerReport:
    """Candidate-cut sandwich around a measured gap."""

    gap: GapResult
    candidates: Mapping[str, float]
    phi_min: float
    witness: str
    upper: float
    lower_witness: float
    lower_certified: bool


def cheeger_check(
    chain: StochasticChain,
    *,
    tol: float = 1e-9,
    gap: GapResult | None = None,
) -> CheegerReport:
    """Sandwich the gap between candidate-cut expansions.

    Candidates are every cone depth, plus every charge cut when N=2.
    The upper bound ``gap <= 2 phi_min`` is asserted for all chains;
    the Cheeger lower bound ``phi_min^2 / 2`` is certified only in the
    two-symbol case, where the candidate family contains the minimizing
    cut, and is otherwise reported as a witness value only.
    """
    n, length = chain.n, chain.length
    if n is None or length is None:
        raise UsageError("cheeger_check needs a built chain with n and length")
    candidates: dict[str, float] = {}
    for depth in range(2 if length % 2 == 0 else 3, length + 1, 2):
        phi = subset_expansion(chain, cone_subset(chain, depth))
        candidates[f"cone d={depth}"] = float(phi)
    if n == 2:
        for q in range(1 if length % 2 else 2, length + 1, 2):
            phi = subset_expansion(chain, n2_charge_subset(chain, q))
            candidates[f"charge q={q}"] = float(phi)
    if not candidates:
        raise UsageError(f"no candidate cuts exist for L={length}")
    witness, phi_min = min(candidates.items(), key=lambda kv: kv[1])
    result = gap if gap is not None else spectral_gap(chain)
    upper = 2.0 * phi_min
    lower = 0.5 * phi_min**2
    if result.gap > upper + tol:
        raise NumericError(
            f"gap {result.gap} violates the upper bound 2*phi = {upper} "
            f"(witness {witness})"
        )
    certified = n == 2
    if certified and result.gap < lower - tol:
        raise NumericError(
            f"gap {result.gap} below the certified lower bound {lower}"
        )
    return CheegerReport(
        gap=result,
        candidates=candidates,
        phi_min=phi_min,
        witness=witness,
        upper=upper,
        lower_witness=lower,
        lower_certified=certified,
    )


def evolve_exact(
    rows: Sequence[Mapping[int, Fraction]],
    dist: Sequence[Fraction],
    steps: int,
) -> list[Fraction]:
    """Push an exact distribution through exact rows ``steps`` times."""
    cur = list(dist)
    for _ in range(steps):
        nxt = [Fraction(0)] * len(cur)
        for i, w in enumerate(cur):
            if w:
                for j, p in rows[i].items():
                    nxt[j] += w * p
        cur = nxt
    return cur


def exact_escape_profile(
    chain: StochasticChain,
    depth: int,
    t_max: int,
    anchor: SectorId | None = None,
) -> tuple[Fraction, ...]:
    """Exact out-of-cone mass at each time for a uniform in-cone start.

    Needs a chain with exact rows (the lumped chain is the intended
    engine: a uniform-in-cone start is constant on sectors, so lumping
    is lossless for this observable). Entry ``t`` is the probability of
    being outside the cone after ``t`` steps; entry 0 is exactly 0.
    """
    if chain.exact_rows is None:
        raise UsageError("escape profiles need an exact chain")
    if t_max < 0:
        raise UsageError("t_max must be nonnegative")
    idx = cone_subset(chain, depth, anchor)
    inside = np.zeros(chain.dimension, dtype=bool)
    inside[idx] = True
    weights = _stationary_weights_exact(chain)
    volume = sum(weights[i] for i in idx)
    dist = [
        weights[i] / volume if inside[i] else Fraction(0)
        for i in range(chain.dimension)
    ]
    out = [Fraction(0)]
    for _ in range(t_max):
        dist = evolve_exact(chain.exact_rows, dist, 1)
        out.append(1 - sum(d for i, d in enumerate(dist) if inside[i]))
    return tuple(out)
