import math

import numpy as np
import pytest

from treepolymer import disorder, measure
from treepolymer.cascade import Vertex, WeightOracle
from treepolymer.errors import (ConfigError, DepthCapError,
                                NonpositiveNormalizerError)
from treepolymer.measure import (Character, PathSample, character_expectation_inf,
                                 character_expectation_n, finite_volume_measure,
                                 infinite_volume_measure, prob_inf_rectangle,
                                 prob_n_rectangle, sample_path, sample_paths)

BETA_C = disorder.critical_beta()


@pytest.fixture(scope="module")
def oracle():
    return WeightOracle(disorder.lognormal(BETA_C), 5)


@pytest.fixture(scope="module")
def det_oracle():
    return WeightOracle(disorder.deterministic(), 5)


@pytest.fixture(scope="module")
def inf_oracle():
    # seed with a comfortably positive normalizer at N=12 (seeds 5 and 7
    # are genuinely unstable there; that path has its own test below)
    return WeightOracle(disorder.lognormal(BETA_C), 2)


# ------------------------------------------------------ finite volume

class TestProbN:
    def test_depth_one_closed_form(self, oracle):
        xp = oracle.weight_at(Vertex.from_string("+"))
        xm = oracle.weight_at(Vertex.from_string("-"))
        assert prob_n_rectangle(oracle, 1, Vertex.from_string("+")) == pytest.approx(
            xp / (xp + xm), rel=1e-13)
        assert prob_n_rectangle(oracle, 1, Vertex.from_string("-")) == pytest.approx(
            xm / (xp + xm), rel=1e-13)

    def test_deeper_rectangle_than_volume(self, oracle):
        # only the first n weights enter when m > n
        xp = oracle.weight_at(Vertex.from_string("+"))
        xm = oracle.weight_at(Vertex.from_string("-"))
        v = Vertex.from_string("+--")
        assert prob_n_rectangle(oracle, 1, v) == pytest.approx(
            xp * 0.25 / (xp + xm), rel=1e-13)

    def test_deterministic_is_uniform(self, det_oracle):
        for n in (1, 4, 9):
            for s in ("+", "+-", "+-+-"):
                v = Vertex.from_string(s)
                assert prob_n_rectangle(det_oracle, n, v) == pytest.approx(
                    2.0 ** -v.depth, rel=1e-12)

    @pytest.mark.parametrize("n,m", [(1, 1), (2, 5), (5, 3), (8, 8), (10, 4)])
    def test_single_matches_measure(self, oracle, n, m):
        meas = finite_volume_measure(oracle, n, m)
        for rank in (0, (1 << m) // 2, (1 << m) - 1):
            v = Vertex.from_rank(m, rank)
            assert prob_n_rectangle(oracle, n, v) == pytest.approx(
                meas.probability_of(v), rel=1e-12)

    @pytest.mark.parametrize("seed", [0, 9])
    @pytest.mark.parametrize("n", [1, 2, 5, 12])
    def test_sums_to_one_and_refines(self, seed, n):
        o = WeightOracle(disorder.lognormal(BETA_C), seed)
        for m in range(1, 7):
            meas = finite_volume_measure(o, n, m)
            assert abs(meas.probabilities.sum() - 1.0) <= 1e-12
            finer = finite_volume_measure(o, n, m + 1)
            coarse = finer.refined_to(m)
            np.testing.assert_allclose(coarse, meas.probabilities, rtol=1e-12)

    def test_rect_depth_cap(self, oracle):
        with pytest.raises(DepthCapError):
            finite_volume_measure(oracle, 10, 17)
        with pytest.raises(DepthCapError):
            prob_n_rectangle(oracle, 27, Vertex.from_string("+"))


# ---------------------------------------------------- infinite volume

class TestProbInf:
    def test_full_level_sums_to_one(self, inf_oracle):
        meas = infinite_volume_measure(inf_oracle, 4, 12)
        assert abs(meas.probabilities.sum() - 1.0) <= 1e-12

    def test_deterministic_is_uniform(self, det_oracle):
        meas = infinite_volume_measure(det_oracle, 3, 9)
        np.testing.assert_allclose(meas.probabilities, 0.125, rtol=1e-13)
        assert prob_inf_rectangle(det_oracle, Vertex.from_string("-+-"), 9) == pytest.approx(
            0.125, rel=1e-13)

    def test_bit_reproducible(self, inf_oracle):
        a = infinite_volume_measure(inf_oracle, 4, 12)
        b = infinite_volume_measure(inf_oracle, 4, 12)
        assert np.array_equal(a.probabilities, b.probabilities)
        assert a.normalizer_shifted == b.normalizer_shifted

    def test_nonpositive_normalizer_raises_with_diagnostic(self):
        # small N at critical disorder: some environments are unstable
        spec = disorder.lognormal(BETA_C)
        hit = None
        for seed in range(60):
            o = WeightOracle(spec, seed)
            try:
                infinite_volume_measure(o, 4, 4)
            except NonpositiveNormalizerError as exc:
                hit = exc
                break
        assert hit is not None, "expected at least one unstable environment"
        assert hit.normalizer is not None and hit.normalizer <= 0

    def test_rescaling_invariance_is_exact(self):
        # common rescaling of all prefix weights must not change anything
        rng = np.random.default_rng(0)
        d = rng.normal(size=16)
        logw = rng.normal(size=16)
        base, _, _ = measure._self_normalized(d, logw)
        shifted, _, _ = measure._self_normalized(d, logw + 123.456)
        assert np.array_equal(base, shifted)

    def test_negative_entries_kept(self):
        # entries with D_N(v) < 0 stay negative (no clipping)
        d = np.array([1.0, -0.2, 2.0, 0.5])
        logw = np.zeros(4)
        probs, den, _ = measure._self_normalized(d, logw)
        assert probs is not None
        assert probs[1] < 0
        assert probs.sum() == pytest.approx(1.0, abs=1e-15)

    def test_refinement_is_approximate_at_fixed_depth(self, inf_oracle):
        # same-N refinement only holds in the deep-approximant limit;
        # tolerance reflects observed convergence at N=12 for this seed
        # (measured max gap 0.041)
        fine = infinite_volume_measure(inf_oracle, 5, 12)
        coarse = infinite_volume_measure(inf_oracle, 4, 12)
        np.testing.assert_allclose(fine.refined_to(4), coarse.probabilities, atol=0.15)

    def test_depth_cap_is_m_plus_n(self, oracle):
        with pytest.raises(DepthCapError):
            infinite_volume_measure(oracle, 4, 23)


# ----------------------------------------------------------- characters

class TestCharacters:
    def test_trivial_character(self, oracle):
        assert character_expectation_n(oracle, 5, Character()) == 1.0
        assert character_expectation_inf(oracle, Character(), 8) == 1.0

    def test_deterministic_symmetry(self, det_oracle):
        for f in (Character({1}), Character({1, 2}), Character({2, 4})):
            assert character_expectation_n(det_oracle, 8, f) == pytest.approx(0.0, abs=1e-13)
            assert character_expectation_inf(det_oracle, f, 8) == pytest.approx(0.0, abs=1e-13)

    def test_bounded_by_one(self):
        for seed in range(10):
            o = WeightOracle(disorder.lognormal(BETA_C), seed)
            val = character_expectation_n(o, 9, Character({1, 3}))
            assert -1.0 <= val <= 1.0

    def test_matches_monte_carlo(self, oracle):
        f = Character({1, 3})
        exact = character_expectation_n(oracle, 6, f)
        rng = np.random.default_rng(42)
        steps = sample_paths(oracle, 6, 100_000, rng)
        chi = (steps[:, 0] * steps[:, 2]).astype(np.float64)
        se = chi.std(ddof=1) / math.sqrt(chi.size)
        assert abs(chi.mean() - exact) < 5 * se

    def test_character_validation(self):
        with pytest.raises(ConfigError):
            Character({0})
        with pytest.raises(ConfigError):
            Character({13})
        with pytest.raises(ConfigError):
            character_expectation_n(WeightOracle(disorder.deterministic(), 0), 2,
                                    Character({1, 2}))

    def test_values_at_depth(self):
        chi = Character({1, 2}).values_at_depth(2)
        # ++, +-, -+, -- in canonical order
        np.testing.assert_array_equal(chi, [1.0, -1.0, -1.0, 1.0])


# --------------------------------------------------------------- sampler

class TestSampler:
    def test_deterministic_is_simple_walk(self, det_oracle):
        rng = np.random.default_rng(7)
        steps = sample_paths(det_oracle, 12, 40_000, rng)
        freq_plus = (steps > 0).mean(axis=0)
        se = math.sqrt(0.25 / 40_000)
        assert np.all(np.abs(freq_plus - 0.5) < 5 * se)

    def test_leaf_frequencies_match_measure(self, oracle):
        from scipy.stats import chisquare

        n, count = 6, 80_000
        rng = np.random.default_rng(11)
        steps = sample_paths(oracle, n, count, rng)
        ranks = np.zeros(count, dtype=np.int64)
        for j in range(n):
            ranks = 2 * ranks + (steps[:, j] < 0)
        counts = np.bincount(ranks, minlength=1 << n)
        probs = finite_volume_measure(oracle, n, n).probabilities
        _, p = chisquare(counts, probs * count)
        assert p > 0.001

    def test_marginal_of_first_steps(self, oracle):
        from scipy.stats import chisquare

        n, m, count = 9, 3, 60_000
        rng = np.random.default_rng(13)
        steps = sample_paths(oracle, n, count, rng)
        ranks = np.zeros(count, dtype=np.int64)
        for j in range(m):
            ranks = 2 * ranks + (steps[:, j] < 0)
        counts = np.bincount(ranks, minlength=1 << m)
        probs = finite_volume_measure(oracle, n, m).probabilities
        _, p = chisquare(counts, probs * count)
        assert p > 0.001

    def test_block_split_does_not_change_law(self, oracle):
        # block descent and recursive split must sample the same measure
        from scipy.stats import chisquare

        n, count = 7, 60_000
        steps = sample_paths(oracle, n, count, np.random.default_rng(3), block_depth=3)
        ranks = np.zeros(count, dtype=np.int64)
        for j in range(n):
            ranks = 2 * ranks + (steps[:, j] < 0)
        counts = np.bincount(ranks, minlength=1 << n)
        probs = finite_volume_measure(oracle, n, n).probabilities
        _, p = chisquare(counts, probs * count)
        assert p > 0.001

    def test_path_sample_invariants(self, oracle):
        rng = np.random.default_rng(5)
        ps = sample_path(oracle, 10, rng)
        assert isinstance(ps, PathSample)
        pos = ps.positions
        assert pos[0] == 0
        assert all(abs(pos[i + 1] - pos[i]) == 1 for i in range(10))

    def test_reproducible_given_stream(self, oracle):
        a = sample_paths(oracle, 8, 100, np.random.default_rng(123))
        b = sample_paths(oracle, 8, 100, np.random.default_rng(123))
        assert np.array_equal(a, b)

    def test_depth_cap(self, oracle):
        with pytest.raises(DepthCapError):
            sample_paths(oracle, 27, 10, np.random.default_rng(0))


# -------------------------------------------------------------- CSV shape

def test_csv_header_and_determinism(oracle):
    meas = finite_volume_measure(oracle, 6, 3)
    text = meas.to_csv_text()
    assert text == meas.to_csv_text()
    lines = text.strip().split("\n")
    assert lines[0] == "# schema_version=1"
    assert any("provenance=prob_n" in ln and "seed=5" in ln for ln in lines)
    assert lines[3] == "vertex,probability"
    assert lines[4].startswith("+++,")
    assert len(lines) == 4 + 8
    total = sum(float(ln.split(",")[1]) for ln in lines[4:])
    assert total == pytest.approx(1.0, abs=1e-12)
