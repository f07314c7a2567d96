"""Monte Carlo kernel, sampler, and estimator tests.

Statistical checks run with fixed seeds and generous thresholds, so
they are deterministic; the one-step law is checked exactly against
the rational transition rows.
"""

from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from pairflip.census import cone_stats, multiplicity, sector_dim
from pairflip.chains import GateKind, build_full_local, state_index
from pairflip.errors import UsageError
from pairflip.montecarlo import (
    ConeEscapeResult,
    SimConfig,
    _block_sizes,
    _parse_observable,
    _run_blocks,
    apply_gate_layers,
    cone_escape_mask,
    cone_escape_probability,
    estimate_tq,
    max_charge_state,
    reduce_states,
    resample_boundary,
    run_ensemble,
    sample_cone_states,
    sample_sector_string,
    step,
    step_states,
)
from pairflip.walks import SectorId, SpinString, reduce_symbols


def _staggered_count(states: np.ndarray, symbol: int) -> np.ndarray:
    length = states.shape[1]
    signs = np.where(np.arange(length) % 2 == 0, -1, 1)
    return ((states == symbol) * signs).sum(axis=1)


class TestConfig:
    def test_defaults(self):
        cfg = SimConfig(n=3, length=6, t_max=10)
        assert cfg.gate is GateKind.PAIR_FLIP
        assert cfg.observables == ("charge:1",)
        assert cfg.initial_state() == (2, 1, 2, 1, 2, 1)

    def test_max_charge_state(self):
        assert max_charge_state(2, 5) == (2, 1, 2, 1, 2)
        arr = np.array([max_charge_state(4, 8)])
        assert _staggered_count(arr, 1)[0] == 4
        with pytest.raises(UsageError):
            max_charge_state(1, 4)

    def test_explicit_initial(self):
        cfg = SimConfig(n=2, length=4, t_max=1, initial=(1, 1, 2, 2))
        assert cfg.initial_state() == (1, 1, 2, 2)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n=1, length=4, t_max=1),
            dict(n=2, length=0, t_max=1),
            dict(n=2, length=4, t_max=-1),
            dict(n=2, length=4, t_max=1, n_trajectories=0),
            dict(n=2, length=4, t_max=1, gamma=0.0),
            dict(n=2, length=4, t_max=1, gamma=1.0),
            dict(n=2, length=4, t_max=1, seed=-1),
            dict(n=2, length=4, t_max=1, seed=1 << 64),
            dict(n=2, length=4, t_max=1, blocks=0),
            dict(n=2, length=4, t_max=1, threads=0),
            dict(n=2, length=4, t_max=1, initial=(1, 2, 1)),
            dict(n=2, length=4, t_max=1, initial=(1, 2, 3, 1)),
            dict(n=2, length=4, t_max=1, observables=("volume",)),
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(UsageError):
            SimConfig(**kwargs)


class TestObservableParsing:
    def test_charge_default_symbol(self):
        obs = _parse_observable("charge", 3, 6)
        assert obs.kind == "charge" and obs.arg == 1

    def test_charge_symbol_range(self):
        assert _parse_observable("charge:3", 3, 6).arg == 3
        with pytest.raises(UsageError):
            _parse_observable("charge:4", 3, 6)

    def test_depth_takes_no_argument(self):
        assert _parse_observable("depth", 3, 6).kind == "depth"
        with pytest.raises(UsageError):
            _parse_observable("depth:2", 3, 6)

    def test_match_site(self):
        assert _parse_observable("match_site:6", 3, 6).arg == 6
        with pytest.raises(UsageError):
            _parse_observable("match_site:7", 3, 6)
        with pytest.raises(UsageError):
            _parse_observable("match_site", 3, 6)

    def test_cone_escape_parity(self):
        assert _parse_observable("cone_escape:4", 3, 6).arg == 4
        with pytest.raises(UsageError):
            _parse_observable("cone_escape:3", 3, 6)
        with pytest.raises(UsageError):
            _parse_observable("cone_escape:8", 3, 6)

    def test_garbage(self):
        with pytest.raises(UsageError):
            _parse_observable("charge:x", 3, 6)
        with pytest.raises(UsageError):
            _parse_observable("entropy", 3, 6)


class TestStepKernel:
    def _one_step_counts(self, n, length, gate, start, m, seed):
        states = np.tile(np.array(start, dtype=np.int8), (m, 1))
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))
        )
        step_states(states, rng, n, gate)
        codes = np.zeros(m, dtype=np.int64)
        for c in range(length):
            codes = codes * n + (states[:, c] - 1)
        return Counter(codes.tolist())

    @pytest.mark.parametrize(
        "n,length,gate,start",
        [
            (2, 4, GateKind.PAIR_FLIP, (2, 1, 1, 2)),
            (3, 3, GateKind.PAIR_FLIP, (1, 1, 2)),
            (3, 3, GateKind.TEMPERLEY_LIEB, (1, 1, 2)),
        ],
    )
    def test_one_step_law_matches_exact_rows(self, n, length, gate, start):
        # the empirical one-step distribution must match the rational
        # transition row of the matching chain build
        chain = build_full_local(n, length, gate, exact=True)
        row = chain.exact_rows[state_index(SpinString(start, n))]
        m = 120_000
        counts = self._one_step_counts(n, length, gate, start, m, seed=11)
        support = sorted(row)
        observed = np.array([counts.get(i, 0) for i in support], dtype=float)
        expected = np.array([float(row[i]) * m for i in support])
        for idx, cnt in counts.items():
            assert idx in row, f"impossible outcome {idx} seen {cnt} times"
        assert observed.sum() == m
        chi2 = stats.chisquare(observed, expected)
        assert chi2.pvalue > 1e-5
        sigma = np.sqrt(expected * (1 - expected / m))
        assert np.all(np.abs(observed - expected) <= 4.5 * sigma)

    def test_scalar_step_matches_batch(self):
        key = np.array([42, 0], dtype=np.uint64)
        s = SpinString((1, 1, 2, 3, 3), 3)
        rng1 = np.random.Generator(np.random.Philox(key=key))
        rng2 = np.random.Generator(np.random.Philox(key=key))
        out = step(s, rng1)
        batch = np.array([s.symbols], dtype=np.int8)
        step_states(batch, rng2, 3, GateKind.PAIR_FLIP)
        assert out.symbols == tuple(int(x) for x in batch[0])

    @staticmethod
    def _irr_words(states):
        stack, sp = reduce_states(states)
        return [
            tuple(int(x) for x in stack[k, : sp[k]])
            for k in range(states.shape[0])
        ]

    def test_layers_preserve_sector(self):
        rng = np.random.default_rng(4)
        states = rng.integers(1, 4, size=(64, 21)).astype(np.int8)
        words0 = self._irr_words(states)
        grng = np.random.default_rng(5)
        for _ in range(50):
            apply_gate_layers(states, grng, 3, GateKind.PAIR_FLIP)
        assert self._irr_words(states) == words0

    def test_layers_preserve_sector_tl(self):
        rng = np.random.default_rng(6)
        states = rng.integers(1, 5, size=(64, 12)).astype(np.int8)
        words0 = self._irr_words(states)
        grng = np.random.default_rng(7)
        for _ in range(50):
            apply_gate_layers(states, grng, 4, GateKind.TEMPERLEY_LIEB)
        assert self._irr_words(states) == words0

    def test_layers_preserve_staggered_charges(self):
        rng = np.random.default_rng(8)
        states = rng.integers(1, 4, size=(200, 14)).astype(np.int8)
        before = {a: _staggered_count(states, a).copy() for a in (1, 2, 3)}
        grng = np.random.default_rng(9)
        apply_gate_layers(states, grng, 3, GateKind.PAIR_FLIP)
        for a in (1, 2, 3):
            assert np.array_equal(before[a], _staggered_count(states, a))

    def test_full_step_charge_moves_by_at_most_one(self):
        rng = np.random.default_rng(10)
        states = np.tile(
            np.array(max_charge_state(3, 12), dtype=np.int8), (100, 1)
        )
        for _ in range(60):
            q_before = _staggered_count(states, 1)
            step_states(states, rng, 3, GateKind.PAIR_FLIP)
            delta = _staggered_count(states, 1) - q_before
            assert set(np.unique(delta)) <= {-1, 0, 1}

    def test_boundary_resample_touches_only_last_site(self):
        rng = np.random.default_rng(11)
        states = rng.integers(1, 4, size=(500, 9)).astype(np.int8)
        frozen = states[:, :-1].copy()
        resample_boundary(states, rng, 3)
        assert np.array_equal(frozen, states[:, :-1])
        assert set(np.unique(states[:, -1])) <= {1, 2, 3}

    def test_trivial_alphabet_is_invariant(self):
        # n=1 only makes sense at the kernel level: everything is frozen
        states = np.ones((10, 6), dtype=np.int8)
        rng = np.random.default_rng(12)
        for gate in (GateKind.PAIR_FLIP, GateKind.TEMPERLEY_LIEB):
            apply_gate_layers(states, rng, 1, gate)
            assert (states == 1).all()

    def test_single_site_chain(self):
        cfg = SimConfig(n=3, length=1, t_max=5, n_trajectories=50, blocks=5)
        series = run_ensemble(cfg)
        assert len(series.times) == 6


class TestReduceStates:
    def test_matches_scalar_reduction(self):
        rng = np.random.default_rng(13)
        states = rng.integers(1, 4, size=(300, 11)).astype(np.int8)
        stack, sp = reduce_states(states)
        for k in range(states.shape[0]):
            irr = reduce_symbols(tuple(int(x) for x in states[k]))
            assert sp[k] == len(irr)
            assert tuple(int(x) for x in stack[k, : sp[k]]) == irr

    def test_cone_escape_mask(self):
        # (1,2,1,2) is already irreducible with prefix (1,); (1,2,2,1)
        # cancels down to the empty word, so it sits outside every cone
        inside = np.array([[1, 2, 1, 2], [1, 2, 2, 1]], dtype=np.int8)
        mask = cone_escape_mask(inside, 2, (1,))
        assert mask.tolist() == [False, True]


class TestSectorSampler:
    def test_lands_in_sector(self):
        rng = np.random.default_rng(14)
        target = SectorId((1, 2, 1), 3)
        for _ in range(200):
            s = sample_sector_string(target, 7, rng)
            assert reduce_symbols(s) == (1, 2, 1)

    def test_root_sector(self):
        rng = np.random.default_rng(15)
        target = SectorId((), 2)
        for _ in range(200):
            s = sample_sector_string(target, 6, rng)
            assert reduce_symbols(s) == ()

    def test_uniform_over_members(self):
        # chi-square against the uniform law on all 47 members
        dim = sector_dim(3, 6, 2)
        assert dim == 47
        rng = np.random.default_rng(16)
        draws = 47_000
        counts = Counter(
            sample_sector_string(SectorId((1, 2), 3), 6, rng)
            for _ in range(draws)
        )
        assert len(counts) == dim
        observed = np.array(sorted(counts.values()), dtype=float)
        res = stats.chisquare(observed)
        assert res.pvalue > 1e-4

    def test_parity_mismatch_rejected(self):
        with pytest.raises(UsageError):
            sample_sector_string(SectorId((1, 2), 3), 5, np.random.default_rng(0))
        with pytest.raises(UsageError):
            sample_sector_string(SectorId((1, 2, 1), 3), 2, np.random.default_rng(0))


class TestConeSampler:
    def test_always_in_cone(self):
        arr = sample_cone_states(3, 7, 3, 500, np.random.default_rng(17))
        mask = cone_escape_mask(arr, 3, (1, 2))
        assert not mask.any()

    def test_depth_mix_matches_volume_weights(self):
        arr = sample_cone_states(3, 6, 2, 30_000, np.random.default_rng(18))
        _, sp = reduce_states(arr)
        weights = {
            d: Fraction(2 ** (d - 1) * sector_dim(3, 6, d)) for d in (2, 4, 6)
        }
        total = sum(weights.values())
        counts = Counter(sp.tolist())
        for d in (2, 4, 6):
            p = float(weights[d] / total)
            sigma = np.sqrt(30_000 * p * (1 - p))
            assert abs(counts[d] - 30_000 * p) <= 4.5 * sigma

    def test_volume_agrees_with_census(self):
        # every sampled state is in the cone and the cone has the frozen
        # volume 22 out of 81 states at n=3, length 4
        st = cone_stats(3, 4, 2)
        assert st.volume == 22
        arr = sample_cone_states(3, 4, 2, 20_000, np.random.default_rng(19))
        frac = (~cone_escape_mask(arr, 2, (1,))).mean()
        assert frac == 1.0

    def test_custom_anchor(self):
        arr = sample_cone_states(3, 6, 2, 300, np.random.default_rng(20), anchor=(3,))
        stack, sp = reduce_states(arr)
        assert (sp >= 2).all()
        assert (stack[:, 0] == 3).all()

    def test_bad_arguments(self):
        rng = np.random.default_rng(0)
        with pytest.raises(UsageError):
            sample_cone_states(3, 6, 3, 10, rng)  # parity
        with pytest.raises(UsageError):
            sample_cone_states(3, 6, 0, 10, rng)
        with pytest.raises(UsageError):
            sample_cone_states(3, 6, 2, 10, rng, anchor=(1, 2))  # length
        with pytest.raises(UsageError):
            sample_cone_states(3, 6, 4, 10, rng, anchor=(1, 1, 2))  # reducible

    def test_deterministic(self):
        a = sample_cone_states(3, 8, 2, 50, np.random.default_rng(21))
        b = sample_cone_states(3, 8, 2, 50, np.random.default_rng(21))
        assert np.array_equal(a, b)


class TestEnsemble:
    def test_bitwise_deterministic(self):
        cfg = SimConfig(n=2, length=8, t_max=30, n_trajectories=900, seed=3, blocks=9)
        a = run_ensemble(cfg)
        b = run_ensemble(cfg)
        threaded = SimConfig(
            n=2, length=8, t_max=30, n_trajectories=900, seed=3, blocks=9, threads=4
        )
        c = run_ensemble(threaded)
        for name in a.means:
            assert np.array_equal(a.means[name], b.means[name])
            assert np.array_equal(a.means[name], c.means[name])
            assert np.array_equal(a.std_errors[name], c.std_errors[name])

    def test_seed_changes_output(self):
        base = dict(n=2, length=8, t_max=20, n_trajectories=400, blocks=4)
        a = run_ensemble(SimConfig(seed=1, **base))
        b = run_ensemble(SimConfig(seed=2, **base))
        assert not np.array_equal(a.means["charge:1"], b.means["charge:1"])

    def test_initial_charge_is_one(self):
        for n, length in [(2, 6), (3, 8), (4, 10)]:
            cfg = SimConfig(n=n, length=length, t_max=0, n_trajectories=32, blocks=2)
            series = run_ensemble(cfg)
            assert series.means["charge:1"][0] == 1.0
            assert series.std_errors["charge:1"][0] == 0.0

    def test_charge_decays_toward_zero(self):
        cfg = SimConfig(n=2, length=6, t_max=120, n_trajectories=2000, seed=23, blocks=20)
        series = run_ensemble(cfg)
        charge = series.means["charge:1"]
        assert charge[0] == 1.0
        assert abs(charge[-1]) < 0.1
        assert charge[5] < charge[1]

    def test_depth_stationary_under_uniform_start(self):
        # uniform product states are stationary for the doubly stochastic
        # chain, so the mean depth must sit at its exact census value for
        # every t; the value is sum(d * sectors(d) * dim(d)) / n^L
        n, length = 3, 16
        exact = float(
            sum(
                Fraction(
                    d * multiplicity(n, d) * sector_dim(n, length, d),
                    n**length,
                )
                for d in range(length + 1)
            )
        )
        cfg = SimConfig(
            n=n,
            length=length,
            t_max=30,
            n_trajectories=3000,
            seed=24,
            blocks=10,
            observables=("depth",),
        )
        rng = np.random.default_rng(99)
        sizes = _block_sizes(cfg.n_trajectories, cfg.blocks)
        starts = [
            rng.integers(1, n + 1, size=(m, length)).astype(np.int8)
            for m in sizes
        ]
        series = _run_blocks(cfg, starts)
        for mean, err in zip(series.means["depth"], series.std_errors["depth"]):
            assert abs(mean - exact) <= 4.0 * err

    def test_depth_drifts_to_equilibrium(self):
        # the fully irreducible start relaxes toward mean depth ~ L*(n-2)/n
        cfg = SimConfig(
            n=3,
            length=16,
            t_max=1500,
            n_trajectories=300,
            seed=24,
            blocks=6,
            observables=("depth",),
        )
        series = run_ensemble(cfg)
        depth = series.means["depth"]
        assert depth[0] == 16.0
        assert depth[300] < 9.0
        assert abs(depth[-1] - 6.573) < 0.6

    def test_match_site_observable(self):
        cfg = SimConfig(
            n=2,
            length=6,
            t_max=40,
            n_trajectories=800,
            seed=25,
            blocks=8,
            observables=("match_site:6", "match_site:1"),
        )
        series = run_ensemble(cfg)
        boundary = series.means["match_site:6"]
        assert boundary[0] == 1.0
        # the resampled boundary site forgets immediately; deep sites slower
        assert boundary[1] < series.means["match_site:1"][1]
        assert np.all(boundary >= 0) and np.all(boundary <= 1)

    def test_trajectory_count_and_times(self):
        cfg = SimConfig(n=2, length=4, t_max=7, n_trajectories=103, blocks=10)
        series = run_ensemble(cfg)
        assert series.n_trajectories == 103
        assert series.times.tolist() == list(range(8))


class TestEstimateTq:
    def test_basic_report(self):
        cfg = SimConfig(
            n=2, length=8, t_max=2000, n_trajectories=4000, seed=5, blocks=40
        )
        rep = estimate_tq(cfg)
        assert not rep.censored
        assert rep.t_q is not None and rep.t_q > 0
        assert rep.ci_low <= rep.t_q <= rep.ci_high
        assert rep.censored_draws == 0
        assert rep.n_resamples == 1000
        # mean at the crossing is really at or below gamma, and above just before
        charge = rep.series.means["charge:1"]
        assert charge[rep.t_q] <= cfg.gamma < charge[rep.t_q - 1]

    def test_early_stop_truncates_series(self):
        cfg = SimConfig(
            n=2, length=8, t_max=100_000, n_trajectories=1000, seed=5, blocks=10
        )
        rep = estimate_tq(cfg)
        assert len(rep.series.times) < 1000

    def test_censored_when_horizon_too_short(self):
        cfg = SimConfig(n=2, length=8, t_max=4, n_trajectories=200, seed=5, blocks=4)
        rep = estimate_tq(cfg)
        assert rep.censored and rep.t_q is None
        assert rep.ci_low is None and rep.ci_high is None

    def test_adds_charge_observable_if_missing(self):
        cfg = SimConfig(
            n=2,
            length=6,
            t_max=500,
            n_trajectories=500,
            seed=26,
            blocks=5,
            observables=("depth",),
        )
        rep = estimate_tq(cfg)
        assert "charge:1" in rep.series.means
        assert "depth" in rep.series.means

    def test_per_trajectory_times(self):
        cfg = SimConfig(n=2, length=6, t_max=400, n_trajectories=300, seed=6, blocks=6)
        rep = estimate_tq(cfg, per_trajectory=True)
        pt = rep.per_trajectory_times
        assert pt is not None and pt.shape == (300,)
        crossed = pt[pt >= 0]
        assert crossed.size > 0
        assert (crossed >= 1).all()
        # ensemble estimate lives inside the per-trajectory spread
        assert crossed.min() <= rep.t_q <= np.percentile(crossed, 99.9)

    def test_deterministic(self):
        cfg = SimConfig(n=2, length=6, t_max=600, n_trajectories=600, seed=27, blocks=6)
        a = estimate_tq(cfg)
        b = estimate_tq(cfg)
        assert a.t_q == b.t_q and a.ci_low == b.ci_low and a.ci_high == b.ci_high


class TestConeEscape:
    def test_zero_at_time_zero_and_flow_bound(self):
        cfg = SimConfig(n=3, length=8, t_max=1, n_trajectories=8000, seed=7, blocks=20)
        res = cone_escape_probability(cfg, 2, [0, 1, 3])
        assert isinstance(res, ConeEscapeResult)
        assert res.times.tolist() == [0, 1, 3]
        assert res.probability[0] == 0.0
        assert res.flow == pytest.approx(
            float(cone_stats(3, 8, 2).boundary_flow)
        )
        # escape accumulates
        assert res.probability[2] > res.probability[1] > 0

    def test_first_step_escape_estimates_flow(self):
        # uniform start in the cone makes the t=1 escape an unbiased
        # estimate of the boundary flow
        cfg = SimConfig(n=3, length=6, t_max=1, n_trajectories=20_000, seed=28, blocks=20)
        res = cone_escape_probability(cfg, 2, [0, 1])
        flow = float(cone_stats(3, 6, 2).boundary_flow)
        assert abs(res.probability[1] - flow) <= 4 * max(res.std_error[1], 1e-12)

    def test_deep_cone_escapes_quickly(self):
        cfg = SimConfig(n=3, length=6, t_max=1, n_trajectories=2000, seed=29, blocks=10)
        res = cone_escape_probability(cfg, 6, [0, 2, 6])
        assert res.probability[-1] > 0.3

    def test_bad_arguments(self):
        cfg = SimConfig(n=3, length=6, t_max=1, n_trajectories=100, blocks=2)
        with pytest.raises(UsageError):
            cone_escape_probability(cfg, 3, [0, 1])  # parity
        with pytest.raises(UsageError):
            cone_escape_probability(cfg, 2, [])
        with pytest.raises(UsageError):
            cone_escape_probability(cfg, 2, [-1, 2])

    def test_deterministic(self):
        cfg = SimConfig(n=3, length=6, t_max=1, n_trajectories=1000, seed=30, blocks=5)
        a = cone_escape_probability(cfg, 2, [0, 2])
        b = cone_escape_probability(cfg, 2, [0, 2])
        assert np.array_equal(a.probability, b.probability)
