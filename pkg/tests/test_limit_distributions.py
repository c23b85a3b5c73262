import inspect
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest

from msearch.enumeration import tree_counts
from msearch.limit_distributions import (
    D_sequence,
    J_integral,
    _compute_J,
    load_sequence,
    moments_Y_alpha,
    moments_Y_half,
    normal_limit_moments,
    resolve_leaves_sign,
    save_sequence,
)
from msearch.moment_engine import exact_moments, make_toll
from msearch.singular_constants import expansion_coefficients


def close(a, b, tol):
    return abs(mp.mpf(a) - mp.mpf(b)) <= tol


class TestYAlpha:
    def test_first_moment_alpha_one(self):
        seq = moments_Y_alpha(1, 3)
        with mp.workprec(200):
            assert close(seq.moments[1], mp.sqrt(mp.pi / 2), mp.mpf(10) ** -40)

    def test_second_moment_alpha_one_is_five_thirds(self):
        # hand-evaluated s=2 instance of the recurrence: the quadratic term
        # contributes 1/3, the linear term 4/3
        seq = moments_Y_alpha(1, 3)
        with mp.workprec(200):
            assert close(seq.moments[2], mp.mpf(5) / 3, mp.mpf(10) ** -40)

    @pytest.mark.parametrize("alpha", [0.75, 1, 2])
    def test_positivity_through_order_ten(self, alpha):
        seq = moments_Y_alpha(alpha, 10)
        assert seq.s_max == 10
        assert all(v > 0 for v in seq.moments[1:])

    def test_moments_zero_index_is_one(self):
        assert moments_Y_alpha(0.75, 2).moments[0] == 1

    def test_small_exponent_computes_without_positivity_claim(self):
        # below the critical exponent the formulas still evaluate; no sign
        # structure is asserted there
        seq = moments_Y_alpha(0.25, 6)
        assert len(seq.moments) == 7
        assert all(mp.isfinite(v) for v in seq.moments)

    def test_critical_exponent_rejected(self):
        with pytest.raises(ValueError, match="1/2"):
            moments_Y_alpha(0.5, 4)
        with pytest.raises(ValueError):
            moments_Y_alpha(Fraction(1, 2), 4)

    def test_nonpositive_exponent_rejected(self):
        for bad in (0, -1, -0.5):
            with pytest.raises(ValueError):
                moments_Y_alpha(bad, 4)

    def test_order_validation(self):
        with pytest.raises(ValueError):
            moments_Y_alpha(1, 0)

    def test_law_takes_no_branching_factor(self):
        assert "m" not in inspect.signature(moments_Y_alpha).parameters

    @pytest.mark.parametrize("alpha", [0.75, 1, 2])
    def test_expansion_route_is_m_free(self, alpha):
        # the leading expansion coefficients depend on the branching factor,
        # but scaling them back to moments must erase it
        with mp.workprec(200):
            ref = moments_Y_alpha(alpha, 6, precision_bits=192)
            a = _scaled_from_expansion(alpha, 2, 6)
            b = _scaled_from_expansion(alpha, 3, 6)
            for s in range(1, 7):
                assert close(a[s], b[s], mp.mpf(10) ** -40)
                assert close(a[s], ref.moments[s], mp.mpf(10) ** -40)


def _scaled_from_expansion(alpha, m, s_max):
    D = D_sequence(alpha, m, s_max, precision_bits=192)
    sd = expansion_coefficients(m, 192)
    with mp.workprec(192):
        ap = mp.mpf(alpha) + mp.mpf("0.5")
        out = [mp.mpf(1)]
        for s in range(1, s_max + 1):
            out.append(
                sd.sigma_m ** s
                * D[s]
                * 2
                * mp.sqrt(mp.pi)
                / ((-sd.a1) * mp.gamma(s * ap - mp.mpf("0.5")))
            )
    return out


class TestJIntegral:
    def test_beta_identity_anchors(self):
        with mp.workprec(200):
            assert close(J_integral(1, 1, 0), mp.pi, mp.mpf(10) ** -30)
            assert close(J_integral(2, 2, 0), mp.pi / 8, mp.mpf(10) ** -30)

    def test_log_singular_anchor(self):
        # J(0,1,1) = -2 pi: split the bracket, then
        # int x^{-1/2}(1-x)^{-1/2} ln x dx = B(1/2,1/2)(psi(1/2)-psi(1))
        #   = -2 pi ln 2, and the (1-x)ln(1-x) half continues to
        # B(-1/2,3/2)(psi(3/2)-psi(1)) = -pi(2 - 2 ln 2); the sum drops
        # the ln 2 terms
        with mp.workprec(200):
            assert close(J_integral(0, 1, 1), -2 * mp.pi, mp.mpf(10) ** -30)

    def test_symmetry_of_the_raw_quadrature(self):
        # the public entry normalizes the index pair, so symmetry is checked
        # on the underlying quadrature itself
        va, ea = _compute_J(1, 2, 1, 160)
        vb, eb = _compute_J(2, 1, 1, 160)
        with mp.workprec(200):
            assert close(va, vb, mp.mpf(10) ** -40)

    def test_graded_mesh_riemann_oracle(self):
        # midpoint sums on meshes graded cubically toward each endpoint,
        # ten million points in all, as an independent low-tech oracle
        val = J_integral(1, 0, 1)
        oracle = _riemann_J101(5_000_000)
        assert abs(float(val) - oracle) < 1e-6

    @pytest.mark.parametrize("triple", [(0, 0, 0), (0, 3, 0), (2, 0, 0)])
    def test_non_integrable_rejected(self, triple):
        with pytest.raises(ValueError, match="temper"):
            J_integral(*triple)

    def test_index_validation(self):
        with pytest.raises(ValueError):
            J_integral(-1, 2, 1)
        with pytest.raises(ValueError):
            J_integral(1.5, 1, 1)

    def test_error_estimate_is_small_and_consistent(self):
        v, err = J_integral(1, 1, 0, return_error=True)
        assert err < mp.mpf(10) ** -40
        assert v == J_integral(1, 1, 0)

    def test_precisions_agree(self):
        a = J_integral(0, 0, 2, precision_bits=160)
        b = J_integral(0, 0, 2, precision_bits=224)
        with mp.workprec(260):
            assert close(a, b, mp.mpf(10) ** -45)


def _riemann_J101(half_points):
    i = np.arange(half_points, dtype=np.float64)
    lo = 0.5 * (i / half_points) ** 3
    hi = 0.5 * ((i + 1) / half_points) ** 3
    mid = 0.5 * (lo + hi)
    w = hi - lo
    x = mid
    br = x * np.log(x) + (1.0 - x) * np.log1p(-x)
    left = np.sum(x ** -0.5 * (1.0 - x) ** -1.5 * br * w)
    t = mid
    br = (1.0 - t) * np.log1p(-t) + t * np.log(t)
    right = np.sum((1.0 - t) ** -0.5 * t ** -1.5 * br * w)
    return float(left + right)


@pytest.fixture(scope="module")
def seq():
    return moments_Y_half(8)


@pytest.fixture(scope="module")
def seqs():
    return {
        (kind, m): normal_limit_moments(kind, m, 8)
        for kind in ("shape", "space", "leaves")
        for m in (2, 3)
    }


class TestYHalf:
    def test_base_moments(self, seq):
        assert seq.moments[0] == 1
        assert seq.moments[1] == 0

    def test_second_moment_reduces_to_one_integral(self, seq):
        # expanding the k=2 instance by hand, every term with an index-1
        # factor vanishes and the prefactor collapses to 1/(4 pi^2)
        with mp.workprec(200):
            ref = J_integral(0, 0, 2) / (4 * mp.pi ** 2)
            assert close(seq.moments[2], ref, mp.mpf(10) ** -40)

    def test_second_moment_regression(self, seq):
        # self-derived pin; no printed numeric value exists for this law
        with mp.workprec(200):
            ref = mp.mpf("0.0971442372131580639701648826521150428814666451")
            assert close(seq.moments[2], ref, mp.mpf(10) ** -40)

    def test_sequence_is_plausibly_a_law(self, seq):
        # Hankel positivity of a genuine moment sequence, here through the
        # order the recurrence delivers
        with mp.workprec(200):
            for dim in range(1, 5):
                H = mp.matrix(dim, dim)
                for i in range(dim):
                    for j in range(dim):
                        H[i, j] = seq.moments[i + j]
                assert mp.det(H) > 0

    def test_aux_records_every_quadrature(self, seq):
        assert seq.aux["J"]
        for key, (value, err) in seq.aux["J"].items():
            k1, k2, k3 = map(int, key.split(","))
            assert 2 <= k1 + k2 + k3 <= 8
            assert k1 + k3 >= 1 and k2 + k3 >= 1
            assert err < mp.mpf(10) ** -40

    def test_order_validation(self):
        with pytest.raises(ValueError):
            moments_Y_half(1)


class TestNormalKinds:
    def test_odd_moments_vanish(self, seqs):
        for seq in seqs.values():
            assert all(seq.moments[s] == 0 for s in (1, 3, 5, 7))

    def test_even_moments_follow_the_variance(self, seqs):
        with mp.workprec(200):
            for seq in seqs.values():
                s2 = seq.aux["sigma2"]
                for l in (1, 2, 3, 4):
                    df = 1
                    for i in range(1, 2 * l, 2):
                        df *= i
                    assert close(
                        seq.moments[2 * l], s2 ** l * df, mp.mpf(10) ** -30
                    )

    def test_gaussian_kurtosis_ratio(self, seqs):
        for seq in seqs.values():
            if not seq.aux["degenerate"]:
                with mp.workprec(200):
                    r = seq.moments[4] / seq.moments[2] ** 2
                    assert close(r, 3, mp.mpf(10) ** -30)

    def test_two_routes_agree(self, seqs):
        for seq in seqs.values():
            assert seq.aux["max_relative_disagreement"] < mp.mpf(10) ** -10

    def test_shape_recurrence_matches_closed_form(self, seqs):
        for m in (2, 3):
            seq = seqs[("shape", m)]
            rec = seq.aux["coefficients"]
            closed = seq.aux["coefficients_closed_form"]
            with mp.workprec(200):
                for s in range(2, 9, 2):
                    assert abs(rec[s] - closed[s]) <= mp.mpf(10) ** -10 * abs(
                        closed[s]
                    )
                for s in (1, 3, 5, 7):
                    assert rec[s] is None

    def test_space_coefficients(self, seqs):
        seq = seqs[("space", 3)]
        sd = expansion_coefficients(3, 160)
        coef = seq.aux["coefficients"]
        with mp.workprec(200):
            assert close(coef[1], -sd.a0 / 2, mp.mpf(10) ** -30)
            # odd coefficients cancel structurally; at working precision
            # only rounding survives
            assert abs(coef[3]) < mp.mpf(10) ** -30 * abs(coef[2])
            assert abs(coef[5]) < mp.mpf(10) ** -25 * abs(coef[4])

    def test_leaves_first_coefficient_vanishes(self, seqs):
        for m in (2, 3):
            assert seqs[("leaves", m)].aux["coefficients"][1] == 0

    def test_binary_node_count_degenerates(self, seqs):
        seq = seqs[("space", 2)]
        assert seq.aux["degenerate"]
        assert seq.aux["sigma2"] == 0
        assert all(v == 0 for v in seq.moments[1:])

    def test_scalings(self, seqs):
        for (kind, m), seq in seqs.items():
            want = "sqrt(n ln n)" if kind == "shape" else "sqrt(n)"
            assert seq.aux["scaling"] == want

    def test_validation(self):
        with pytest.raises(ValueError):
            normal_limit_moments("nonsense", 2, 4)
        with pytest.raises(ValueError):
            normal_limit_moments("shape", 2, 1)


class TestLeavesSignResolution:
    def test_positive_sign_wins_binary(self):
        sign, report = resolve_leaves_sign(m=2, n=800)
        assert sign == 1
        assert report["candidate_minus"] < 0 < report["candidate_plus"]
        assert report["observed_fourth_over_n2"] > 0
        assert report["relative_error_to_plus"] < 0.01

    def test_positive_sign_wins_ternary(self):
        sign, report = resolve_leaves_sign(m=3, n=400)
        assert sign == 1
        assert report["relative_error_to_plus"] < 0.05


class TestInvariancePrinciple:
    def test_band_around_limit_moments_shrinks(self):
        # exact standardized moments for two branching factors against the
        # common limit sequence: the worst deviation over both factors and
        # s <= 4 must shrink as n doubles; no fixed tolerance is claimed
        M = moments_Y_alpha(1, 4)
        band = {500: mp.mpf(0), 1000: mp.mpf(0), 2000: mp.mpf(0)}
        for m in (2, 3):
            tab = tree_counts(m, 2000)
            mt = exact_moments(make_toll(m, "power", alpha=1), tab, 4, N=2000)
            sd = expansion_coefficients(m, 160)
            with mp.workprec(160):
                for n in band:
                    for s in range(1, 5):
                        mu = mt.moment(s, n)
                        val = mp.mpf(mu.numerator) / mp.mpf(mu.denominator)
                        scaled = (
                            sd.sigma_m ** s
                            * val
                            / mp.mpf(n) ** (mp.mpf(3 * s) / 2)
                        )
                        d = abs(scaled - M.moments[s])
                        if d > band[n]:
                            band[n] = d
        assert band[500] > band[1000] > band[2000]


class TestSerialization:
    def test_round_trip(self, tmp_path):
        for seq in (
            moments_Y_alpha(Fraction(3, 4), 4),
            moments_Y_half(4),
            normal_limit_moments("leaves", 3, 4),
        ):
            p = tmp_path / f"{seq.kind}.json"
            save_sequence(p, seq)
            back = load_sequence(p)
            assert back.kind == seq.kind
            assert back.provenance == seq.provenance
            assert set(map(str, back.params)) == set(map(str, seq.params))
            for a, b in zip(seq.moments, back.moments):
                assert abs(a - b) < mp.mpf(10) ** -70
            assert set(back.aux) == set(seq.aux)

    def test_fraction_parameter_survives(self, tmp_path):
        seq = moments_Y_alpha(Fraction(3, 4), 3)
        p = tmp_path / "frac.json"
        save_sequence(p, seq)
        back = load_sequence(p)
        assert back.params["alpha"] == Fraction(3, 4)
        assert isinstance(back.params["alpha"], Fraction)

    def test_resave_is_byte_identical(self, tmp_path):
        seq = normal_limit_moments("shape", 2, 4)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_sequence(p1, seq)
        save_sequence(p2, load_sequence(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_disk_cache_round(self, tmp_path):
        cold = moments_Y_half(4, cache_dir=str(tmp_path))
        files = list(tmp_path.iterdir())
        assert len(files) == 1
        assert "yhalf" in files[0].name and "b160" in files[0].name
        warm = moments_Y_half(4, cache_dir=str(tmp_path))
        for a, b in zip(cold.moments, warm.moments):
            assert abs(a - b) < mp.mpf(10) ** -70
        assert set(cold.aux["J"]) == set(warm.aux["J"])

    def test_cache_ignores_very_high_precision(self, tmp_path):
        moments_Y_alpha(1, 3, precision_bits=300, cache_dir=str(tmp_path))
        assert list(tmp_path.iterdir()) == []

    def test_bad_arguments_beat_the_cache(self, tmp_path):
        with pytest.raises(ValueError):
            moments_Y_alpha(0.5, 3, cache_dir=str(tmp_path))
        assert list(tmp_path.iterdir()) == []
