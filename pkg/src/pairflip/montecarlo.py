"""Monte Carlo relaxation experiments for the boundary-driven chain.

Trajectories evolve under the same update as the full local chain: one
uniform resample of the boundary site, then the even brickwork layer,
then the odd one. States live in int8 arrays of shape
``(trajectories, length)``; gates act vectorized across trajectories
and across the disjoint pairs of a layer.

Reproducibility: trajectories are partitioned into blocks and every
block owns a counter-based Philox stream keyed ``(seed, block)``
(initial-state sampling uses a parallel key family). Results are
reduced in fixed block order, so output is bit-identical for a given
config regardless of thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .census import cone_stats, sector_dim
from .chains import GateKind, layer_pairs
from .errors import NumericError, UsageError
from .walks import SectorId, SpinString

_INIT_KEY_OFFSET = 1 << 63  # separates init streams from dynamics streams
_BOOT_KEY = (1 << 63) - 1  # bootstrap stream block index

KNOWN_OBSERVABLES = ("charge", "depth", "match_site", "cone_escape")


@dataclass(frozen=True)
class SimConfig:
    """Everything a run needs; equal configs give identical output."""

    n: int
    length: int
    t_max: int
    gate: GateKind = GateKind.PAIR_FLIP
    n_trajectories: int = 10_000
    seed: int = 0
    observables: tuple[str, ...] = ("charge:1",)
    gamma: float = 0.1
    blocks: int = 100
    threads: int = 1
    initial: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.n < 2:
            raise UsageError(f"alphabet size must be at least 2, got {self.n}")
        if self.length < 1:
            raise UsageError(f"length must be positive, got {self.length}")
        if self.t_max < 0:
            raise UsageError("t_max must be nonnegative")
        if self.n_trajectories < 1:
            raise UsageError("need at least one trajectory")
        if not 0 <= self.seed < 1 << 64:
            raise UsageError("seed must fit in 64 bits")
        if not 0 < self.gamma < 1:
            raise UsageError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.blocks < 1 or self.threads < 1:
            raise UsageError("blocks and threads must be positive")
        if self.initial is not None:
            if len(self.initial) != self.length:
                raise UsageError("initial state has the wrong length")
            SpinString(tuple(self.initial), self.n)
        for obs in self.observables:
            _parse_observable(obs, self.n, self.length)

    def initial_state(self) -> tuple[int, ...]:
        if self.initial is not None:
            return tuple(self.initial)
        return max_charge_state(self.n, self.length)


def max_charge_state(n: int, length: int) -> tuple[int, ...]:
    """The 2,1,2,1,... pattern: maximal staggered charge of symbol 1."""
    if n < 2 or length < 1:
        raise UsageError("need n >= 2 and positive length")
    return tuple(1 if i % 2 else 2 for i in range(length))


@dataclass(frozen=True)
class _Observable:
    name: str
    kind: str
    arg: int | None


def _parse_observable(text: str, n: int, length: int) -> _Observable:
    head, _, tail = text.partition(":")
    if head == "depth":
        if tail:
            raise UsageError("depth takes no argument")
        return _Observable(text, "depth", None)
    if head not in KNOWN_OBSERVABLES:
        raise UsageError(
            f"unknown observable {text!r}; expected one of {KNOWN_OBSERVABLES}"
        )
    try:
        arg = int(tail) if tail else None
    except ValueError:
        raise UsageError(f"bad observable argument in {text!r}") from None
    if head == "charge":
        a = 1 if arg is None else arg
        if not 1 <= a <= n:
            raise UsageError(f"charge symbol {a} outside 1..{n}")
        return _Observable(text, "charge", a)
    if arg is None:
        raise UsageError(f"observable {text!r} needs an argument")
    if head == "match_site":
        if not 1 <= arg <= length:
            raise UsageError(f"site {arg} outside 1..{length}")
        return _Observable(text, "match_site", arg)
    if arg < 2 or arg > length or (length - arg) % 2:
        raise UsageError(f"cone depth {arg} invalid for length {length}")
    return _Observable(text, "cone_escape", arg)


# ---------------------------------------------------------------------------
# stepping kernels


def _dynamics_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, block], dtype=np.uint64))
    )


def _init_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(
            key=np.array([seed, _INIT_KEY_OFFSET + block], dtype=np.uint64)
        )
    )


def resample_boundary(
    states: np.ndarray, rng: np.random.Generator, n: int
) -> None:
    """Uniformly redraw the last site of every trajectory, in place."""
    states[:, -1] = rng.integers(1, n + 1, size=states.shape[0], dtype=np.int8)


def _apply_layer(
    states: np.ndarray,
    rng: np.random.Generator,
    n: int,
    gate: GateKind,
    lefts: np.ndarray,
) -> None:
    if lefts.size == 0:
        return
    m = states.shape[0]
    a = states[:, lefts]
    b = states[:, lefts + 1]
    eq = a == b
    if gate is GateKind.PAIR_FLIP:
        new = rng.integers(1, n + 1, size=(m, lefts.size), dtype=np.int8)
        out = np.where(eq, new, a)
        states[:, lefts] = out
        states[:, lefts + 1] = np.where(eq, new, b)
        return
    # TL: an equal pair stays with 1 - 2(N-1)/N^2, otherwise moves to a
    # uniform different pair; drawing the shifted value b0 + [b0 >= a-1]
    # picks uniformly among the n-1 symbols distinct from a
    if n == 1:
        return
    u = rng.random(size=(m, lefts.size))
    flip = eq & (u < 2 * (n - 1) / n**2)
    b0 = rng.integers(0, n - 1, size=(m, lefts.size), dtype=np.int8)
    new = (b0 + (b0 >= a - 1) + 1).astype(np.int8)
    out_a = np.where(flip, new, a)
    states[:, lefts] = out_a
    states[:, lefts + 1] = np.where(flip, new, b)


def apply_gate_layers(
    states: np.ndarray, rng: np.random.Generator, n: int, gate: GateKind
) -> None:
    """Even layer then odd layer, vectorized over disjoint pairs."""
    length = states.shape[1]
    for parity in ("even", "odd"):
        pairs = layer_pairs(length, parity)
        lefts = np.array([i for i, _ in pairs], dtype=np.int64)
        _apply_layer(states, rng, n, gate, lefts)


def step_states(
    states: np.ndarray, rng: np.random.Generator, n: int, gate: GateKind
) -> None:
    """One full update: boundary resample, even layer, odd layer."""
    resample_boundary(states, rng, n)
    apply_gate_layers(states, rng, n, gate)


def step(
    state: SpinString,
    rng: np.random.Generator,
    gate: GateKind = GateKind.PAIR_FLIP,
) -> SpinString:
    """Single-trajectory convenience wrapper around the batch kernel."""
    arr = np.array([state.symbols], dtype=np.int8)
    step_states(arr, rng, state.alphabet_size, gate)
    return SpinString(tuple(int(x) for x in arr[0]), state.alphabet_size)


# ---------------------------------------------------------------------------
# vectorized sector reduction of a batch of states


def reduce_states(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Irreducible prefixes of a batch, as (stack, depth).

    ``stack[k, :depth[k]]`` is trajectory k's irreducible string. One
    vectorized pass per site, so O(L) numpy operations total.
    """
    m, length = states.shape
    stack = np.zeros((m, length), dtype=np.int8)
    sp = np.zeros(m, dtype=np.int64)
    rows = np.arange(m)
    for c in range(length):
        sym = states[:, c]
        top = stack[rows, np.maximum(sp - 1, 0)]
        cancel = (sp > 0) & (top == sym)
        sp = np.where(cancel, sp - 1, sp + 1)
        push = ~cancel
        stack[rows[push], sp[push] - 1] = sym[push]
    return stack, sp


def cone_escape_mask(
    states: np.ndarray, depth: int, anchor: tuple[int, ...]
) -> np.ndarray:
    """True where a state lies outside the cone below ``anchor``."""
    stack, sp = reduce_states(states)
    inside = sp >= depth
    for k, sym in enumerate(anchor):
        inside &= stack[:, k] == sym
    return ~inside


def _canonical_anchor(depth: int) -> tuple[int, ...]:
    return tuple(1 if k % 2 == 0 else 2 for k in range(depth - 1))


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class EnsembleSeries:
    """Per-time ensemble means with standard errors of the mean."""

    config: SimConfig
    times: np.ndarray
    means: Mapping[str, np.ndarray]
    std_errors: Mapping[str, np.ndarray]
    block_sums: Mapping[str, np.ndarray]  # (blocks, T+1), for bootstrap
    block_sizes: np.ndarray

    @property
    def n_trajectories(self) -> int:
        return int(self.block_sizes.sum())


class _Block:
    """Owns one block's states, rng, and accumulated sums."""

    def __init__(
        self,
        cfg: SimConfig,
        block: int,
        size: int,
        observables: Sequence[_Observable],
        initial: np.ndarray,
    ):
        self.cfg = cfg
        self.size = size
        self.rng = _dynamics_rng(cfg.seed, block)
        self.states = initial.copy()
        self.initial = initial.copy()
        self.observables = observables
        self.sums: dict[str, list[float]] = {o.name: [] for o in observables}
        self.sqsums: dict[str, list[float]] = {o.name: [] for o in observables}
        self._signs = np.where(np.arange(cfg.length) % 2 == 0, -1, 1)
        self._anchors = {
            o.arg: _canonical_anchor(o.arg)
            for o in observables
            if o.kind == "cone_escape"
        }

    def _values(self, obs: _Observable) -> np.ndarray:
        s = self.states
        if obs.kind == "charge":
            q = ((s == obs.arg) * self._signs).sum(axis=1)
            return 2.0 * q / self.cfg.length
        if obs.kind == "depth":
            _, sp = reduce_states(s)
            return sp.astype(np.float64)
        if obs.kind == "match_site":
            i = obs.arg - 1
            return (s[:, i] == self.initial[:, i]).astype(np.float64)
        return cone_escape_mask(s, obs.arg, self._anchors[obs.arg]).astype(
            np.float64
        )

    def record(self) -> None:
        for obs in self.observables:
            vals = self._values(obs)
            self.sums[obs.name].append(float(vals.sum()))
            self.sqsums[obs.name].append(float((vals * vals).sum()))

    def advance(self, steps: int) -> None:
        for _ in range(steps):
            step_states(self.states, self.rng, self.cfg.n, self.cfg.gate)
            self.record()


def _block_sizes(n_trajectories: int, blocks: int) -> list[int]:
    base, rem = divmod(n_trajectories, blocks)
    return [base + (1 if b < rem else 0) for b in range(blocks)]


def _assemble_series(cfg: SimConfig, blocks: Sequence[_Block]) -> EnsembleSeries:
    names = [o.name for o in blocks[0].observables]
    sizes = np.array([b.size for b in blocks], dtype=np.int64)
    total = sizes.sum()
    steps = len(blocks[0].sums[names[0]])
    means: dict[str, np.ndarray] = {}
    errs: dict[str, np.ndarray] = {}
    bsums: dict[str, np.ndarray] = {}
    for name in names:
        sums = np.array([b.sums[name] for b in blocks])  # (B, T+1)
        sq = np.array([b.sqsums[name] for b in blocks])
        tot = sums.sum(axis=0)
        tot_sq = sq.sum(axis=0)
        mean = tot / total
        if total > 1:
            var = np.maximum(tot_sq / total - mean**2, 0.0) * total / (total - 1)
            err = np.sqrt(var / total)
        else:
            err = np.zeros_like(mean)
        means[name] = mean
        errs[name] = err
        bsums[name] = sums
    return EnsembleSeries(
        config=cfg,
        times=np.arange(steps),
        means=means,
        std_errors=errs,
        block_sums=bsums,
        block_sizes=sizes,
    )


def _run_blocks(
    cfg: SimConfig,
    initial_states: Sequence[np.ndarray],
    *,
    stop_observable: str | None = None,
    stop_threshold: float = 0.0,
    segment: int = 64,
) -> EnsembleSeries:
    observables = [
        _parse_observable(o, cfg.n, cfg.length) for o in cfg.observables
    ]
    sizes = [arr.shape[0] for arr in initial_states]
    blocks = [
        _Block(cfg, b, sizes[b], observables, initial_states[b])
        for b in range(len(initial_states))
        if sizes[b] > 0
    ]
    for blk in blocks:
        blk.record()  # t = 0
    done = 0
    total = sum(sizes)

    def run_segment(blk: _Block, steps: int) -> None:
        blk.advance(steps)

    while done < cfg.t_max:
        chunk = min(segment, cfg.t_max - done)
        if cfg.threads > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                list(pool.map(lambda blk: run_segment(blk, chunk), blocks))
        else:
            for blk in blocks:
                run_segment(blk, chunk)
        done += chunk
        if stop_observable is not None:
            # reduce the stop observable over the window just computed
            sums = np.array([b.sums[stop_observable] for b in blocks])
            mean = sums.sum(axis=0) / total
            if mean[-1] <= stop_threshold or mean.min() <= stop_threshold:
                break
    return _assemble_series(cfg, blocks)


def run_ensemble(cfg: SimConfig) -> EnsembleSeries:
    """Evolve an ensemble from a shared initial state, full horizon."""
    init = np.array(cfg.initial_state(), dtype=np.int8)
    sizes = _block_sizes(cfg.n_trajectories, cfg.blocks)
    starts = [np.tile(init, (m, 1)) for m in sizes]
    return _run_blocks(cfg, starts)


# ---------------------------------------------------------------------------
# first passage of the ensemble-mean charge


@dataclass(frozen=True)
class TQReport:
    """First time the ensemble-mean normalized charge drops to gamma."""

    gamma: float
    t_q: int | None
    ci_low: int | None
    ci_high: int | None
    censored: bool
    censored_draws: int
    n_resamples: int
    series: EnsembleSeries
    per_trajectory_times: np.ndarray | None = None


def _crossing(mean: np.ndarray, gamma: float) -> int | None:
    hits = np.nonzero(mean <= gamma)[0]
    return int(hits[0]) if hits.size else None


def estimate_tq(
    cfg: SimConfig,
    *,
    n_resamples: int = 1000,
    per_trajectory: bool = False,
) -> TQReport:
    """Ensemble-mean first passage with a block-bootstrap interval.

    Simulation stops early once the mean has fallen decisively below
    gamma (or at ``t_max``, in which case the estimate is censored and
    says so). The confidence interval resamples whole blocks; draws
    whose resampled mean never crosses inside the simulated window are
    counted in ``censored_draws`` rather than silently clamped.
    """
    charge_obs = "charge:1"
    if charge_obs not in cfg.observables:
        cfg = replace(cfg, observables=(charge_obs,) + cfg.observables)
    if per_trajectory:
        track = _TrackedRun(cfg)
        series = track.series
    else:
        init = np.array(cfg.initial_state(), dtype=np.int8)
        sizes = _block_sizes(cfg.n_trajectories, cfg.blocks)
        starts = [np.tile(init, (m, 1)) for m in sizes]
        # stop once safely below gamma so bootstrap crossings resolve
        series = _run_blocks(
            cfg,
            starts,
            stop_observable=charge_obs,
            stop_threshold=0.5 * cfg.gamma,
        )
    mean = series.means[charge_obs]
    t_q = _crossing(mean, cfg.gamma)
    censored = t_q is None
    ci_low = ci_high = None
    censored_draws = 0
    if not censored:
        sums = series.block_sums[charge_obs]
        sizes_arr = series.block_sizes.astype(np.float64)
        nblocks = sums.shape[0]
        rng = np.random.Generator(
            np.random.Philox(key=np.array([cfg.seed, _BOOT_KEY], dtype=np.uint64))
        )
        crossings = []
        for start in range(0, n_resamples, 200):
            count = min(200, n_resamples - start)
            pick = rng.integers(0, nblocks, size=(count, nblocks))
            num = sums[pick].sum(axis=1)
            den = sizes_arr[pick].sum(axis=1)[:, None]
            booted = num / den
            hit = booted <= cfg.gamma
            any_hit = hit.any(axis=1)
            first = hit.argmax(axis=1)
            censored_draws += int((~any_hit).sum())
            crossings.extend(first[any_hit].tolist())
        if crossings:
            lo, hi = np.percentile(np.asarray(crossings), [2.5, 97.5])
            ci_low, ci_high = int(lo), int(math.ceil(hi))
    per_traj = track.first_passages if per_trajectory else None
    return TQReport(
        gamma=cfg.gamma,
        t_q=t_q,
        ci_low=ci_low,
        ci_high=ci_high,
        censored=censored,
        censored_draws=censored_draws,
        n_resamples=n_resamples,
        series=series,
        per_trajectory_times=per_traj,
    )


class _TrackedRun:
    """Full-horizon run that also records per-trajectory crossings."""

    def __init__(self, cfg: SimConfig):
        init = np.array(cfg.initial_state(), dtype=np.int8)
        sizes = _block_sizes(cfg.n_trajectories, cfg.blocks)
        observables = [
            _parse_observable(o, cfg.n, cfg.length) for o in cfg.observables
        ]
        blocks = [
            _Block(cfg, b, m, observables, np.tile(init, (m, 1)))
            for b, m in enumerate(sizes)
            if m > 0
        ]
        firsts = []
        signs = np.where(np.arange(cfg.length) % 2 == 0, -1, 1)
        for blk in blocks:
            blk.record()
            fp = np.full(blk.size, -1, dtype=np.int64)
            for t in range(1, cfg.t_max + 1):
                blk.advance(1)
                q = ((blk.states == 1) * signs).sum(axis=1) * 2.0 / cfg.length
                hit = (fp < 0) & (q <= cfg.gamma)
                fp[hit] = t
            firsts.append(fp)
        self.series = _assemble_series(cfg, blocks)
        self.first_passages = np.concatenate(firsts)


# ---------------------------------------------------------------------------
# uniform sampling inside a cone


def _distance_to_target(
    path: Sequence[int], target: Sequence[int]
) -> tuple[int, int]:
    common = 0
    for a, b in zip(path, target):
        if a != b:
            break
        common += 1
    return len(path) + len(target) - 2 * common, common


def sample_sector_string(
    target: SectorId, length: int, rng: np.random.Generator
) -> tuple[int, ...]:
    """Uniform member of a sector, by a walk conditioned on its endpoint.

    Walk counts between tree vertices depend only on their distance,
    and equal the sector dimensions, so each step compares the counts
    of the one neighbor toward the target against the ``N-1`` neighbors
    away from it.
    """
    n = target.alphabet_size
    q = target.irr
    if (length - len(q)) % 2 or len(q) > length:
        raise UsageError(
            f"sector depth {len(q)} unreachable at length {length}"
        )
    path: list[int] = []
    out: list[int] = []
    for remaining in range(length, 0, -1):
        r, common = _distance_to_target(path, q)
        if r == 0:
            # at the target every neighbor is one step farther: uniform
            sym = int(rng.integers(1, n + 1))
        else:
            # the one neighbor toward the target has weight A(rem-1, r-1),
            # each of the n-1 others A(rem-1, r+1); their sum is A(rem, r)
            denom = sector_dim(n, remaining, r)
            toward_sym = q[common] if common == len(path) else path[-1]
            toward = sector_dim(n, remaining - 1, r - 1)
            if rng.random() < float(Fraction(toward, denom)):
                sym = toward_sym
            else:
                choices = [c for c in range(1, n + 1) if c != toward_sym]
                sym = choices[int(rng.integers(0, len(choices)))]
        # emitting the top symbol cancels it; any other symbol extends
        if path and sym == path[-1]:
            path.pop()
        else:
            path.append(sym)
        out.append(sym)
    if tuple(path) != q:
        raise NumericError("conditioned walk missed its target sector")
    return tuple(out)


def _cone_sector_table(
    n: int, length: int, depth: int
) -> tuple[list[int], list[Fraction]]:
    """Depths in the cone with their total state-mass fractions."""
    depths = list(range(depth, length + 1, 2))
    weights = [
        Fraction((n - 1) ** (dd - depth + 1) * sector_dim(n, length, dd))
        for dd in depths
    ]
    total = sum(weights)
    return depths, [w / total for w in weights]


def sample_cone_states(
    n: int,
    length: int,
    depth: int,
    count: int,
    rng: np.random.Generator,
    anchor: tuple[int, ...] | None = None,
) -> np.ndarray:
    """Uniform states of the cone below ``anchor``, rejection free.

    Picks the sector first (mass proportional to its dimension times
    the number of cone sectors at that depth), extends the anchor by a
    uniform non-backtracking branch, then samples a uniform member of
    that sector.
    """
    if depth < 2 or depth > length or (length - depth) % 2:
        raise UsageError(f"cone depth {depth} invalid for length {length}")
    if anchor is None:
        anchor = _canonical_anchor(depth)
    SectorId(anchor, n)  # validates irreducibility
    if len(anchor) != depth - 1:
        raise UsageError("anchor must sit one level above the cone depth")
    depths, probs = _cone_sector_table(n, length, depth)
    cum = np.cumsum([float(p) for p in probs])
    cum[-1] = 1.0
    out = np.empty((count, length), dtype=np.int8)
    for k in range(count):
        dd = depths[int(np.searchsorted(cum, rng.random(), side="right"))]
        irr = list(anchor)
        while len(irr) < dd:
            prev = irr[-1] if irr else 0
            choices = [c for c in range(1, n + 1) if c != prev]
            irr.append(choices[int(rng.integers(0, len(choices)))])
        syms = sample_sector_string(SectorId(tuple(irr), n), length, rng)
        out[k] = syms
    return out


@dataclass(frozen=True)
class ConeEscapeResult:
    """Escape probabilities against the flow bound ``t * Phi``."""

    times: np.ndarray
    probability: np.ndarray
    std_error: np.ndarray
    flow: float
    depth: int


def cone_escape_probability(
    cfg: SimConfig, depth: int, t_samples: Sequence[int]
) -> ConeEscapeResult:
    """Measured out-of-cone probability from a uniform in-cone start.

    Asserts the flow bound: the escape probability at time t may not
    exceed ``t * Phi(C_d)`` by more than four standard errors; a
    violation raises. At t=0 the probability is exactly zero by
    construction.
    """
    times = sorted(set(int(t) for t in t_samples))
    if not times:
        raise UsageError("need at least one sample time")
    if times[0] < 0:
        raise UsageError("sample times must be nonnegative")
    obs = f"cone_escape:{depth}"
    cfg = replace(cfg, observables=(obs,), t_max=times[-1], initial=None)
    sizes = _block_sizes(cfg.n_trajectories, cfg.blocks)
    starts = []
    for b, m in enumerate(sizes):
        rng = _init_rng(cfg.seed, b)
        starts.append(
            sample_cone_states(cfg.n, cfg.length, depth, m, rng)
            if m
            else np.empty((0, cfg.length), dtype=np.int8)
        )
    series = _run_blocks(cfg, starts)
    flow = float(cone_stats(cfg.n, cfg.length, depth).boundary_flow)
    sel = np.array(times, dtype=np.int64)
    prob = series.means[obs][sel]
    err = series.std_errors[obs][sel]
    for t, p, e in zip(times, prob, err):
        if t == 0 and p != 0.0:
            raise NumericError("cone sampler produced out-of-cone states")
        if p > t * flow + 4 * e:
            raise NumericError(
                f"escape probability {p} at t={t} violates the flow bound "
                f"{t * flow} beyond 4 sigma ({e})"
            )
    return ConeEscapeResult(
        times=sel, probability=prob, std_error=err, flow=flow, depth=depth
    )
