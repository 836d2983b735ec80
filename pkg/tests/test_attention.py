import math

import numpy as np
import pytest

from privascope.activations import ActivationDump, SentenceRecord
from privascope.attention import (
    LN2,
    HeadDistanceMatrix,
    classical_mds,
    head_coordinates_csv,
    head_distance_matrix,
    head_scatter_svg,
    js_divergence,
    word_align_attention,
)
from privascope.attention import _jacobi_eigh
from privascope.errors import ContractError, DataError


def js_oracle(p, q):
    """Term-by-term JS in plain Python, 0 * log 0 treated as 0."""
    total = 0.0
    for pi, qi in zip(p, q):
        mi = (pi + qi) / 2.0
        if pi > 0.0:
            total += 0.5 * pi * math.log(pi / mi)
        if qi > 0.0:
            total += 0.5 * qi * math.log(qi / mi)
    return total


def random_spans(t, rng):
    if t == 1:
        return [(0, 1)]
    k = int(rng.integers(0, t - 1))
    cuts = sorted(int(c) for c in rng.choice(np.arange(1, t), size=k, replace=False))
    bounds = [0, *cuts, t]
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def attention_record(planes, spans):
    """Build a record around (L, H, T, T) row-stochastic attention planes."""
    planes = np.asarray(planes, dtype=np.float64)
    layers, _, t, _ = planes.shape
    subwords = [f"s{i}" for i in range(t)]
    words = [f"w{i}" for i in range(len(spans))]
    activations = np.zeros((layers, t, 4), dtype=np.float32)
    return SentenceRecord(subwords, words, spans, activations, planes)


def random_attention_record(layers, heads, t, rng, spans=None):
    planes = rng.dirichlet(np.ones(t), size=(layers, heads, t))
    return attention_record(planes, spans or random_spans(t, rng))


class TestWordAlignAttention:
    def test_single_subword_words_unchanged(self):
        rng = np.random.default_rng(0)
        t = 5
        rec = random_attention_record(1, 1, t, rng, spans=[(i, i + 1) for i in range(t)])
        aligned = word_align_attention(rec, 0, 0)
        np.testing.assert_array_equal(aligned, np.asarray(rec.attentions[0, 0], float))

    def test_hand_computed_merge(self):
        # T=3 grouped into spans [0,1) and [1,3); the record stores float32,
        # so the expectation is built from the stored plane
        plane = np.array(
            [
                [0.6, 0.3, 0.1],
                [0.2, 0.5, 0.3],
                [0.1, 0.1, 0.8],
            ]
        )
        rec = attention_record(plane[None, None], [(0, 1), (1, 3)])
        aligned = word_align_attention(rec, 0, 0)
        s = np.asarray(rec.attentions[0, 0], dtype=np.float64)
        expected = np.array(
            [
                [s[0, 0], s[0, 1] + s[0, 2]],
                [
                    (s[1, 0] + s[2, 0]) / 2,
                    (s[1, 1] + s[1, 2] + s[2, 1] + s[2, 2]) / 2,
                ],
            ]
        )
        np.testing.assert_allclose(aligned, expected, rtol=0, atol=1e-15)
        np.testing.assert_allclose(aligned, [[0.6, 0.4], [0.15, 0.85]], atol=1e-7)

    def test_uniform_attention_gives_span_fractions(self):
        t = 6
        spans = [(0, 2), (2, 3), (3, 6)]
        plane = np.full((t, t), 1.0 / t)
        rec = attention_record(plane[None, None], spans)
        aligned = word_align_attention(rec, 0, 0)
        cell = float(np.float32(1.0 / t))
        expected = np.tile([2 * cell, cell, 3 * cell], (3, 1))
        np.testing.assert_allclose(aligned, expected, rtol=0, atol=1e-15)

    def test_rows_stay_stochastic_on_random_inputs(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            t = int(rng.integers(1, 13))
            rec = random_attention_record(2, 2, t, rng)
            for layer in range(2):
                for head in range(2):
                    aligned = word_align_attention(rec, layer, head)
                    assert aligned.shape == (rec.num_words, rec.num_words)
                    np.testing.assert_allclose(
                        aligned.sum(axis=1), 1.0, rtol=0, atol=1e-6
                    )

    def test_requires_attention_and_valid_indices(self):
        rng = np.random.default_rng(1)
        rec = random_attention_record(2, 3, 4, rng)
        bare = SentenceRecord(
            rec.subword_tokens,
            rec.words,
            rec.word_spans,
            rec.activations,
        )
        with pytest.raises(ContractError, match="no attention"):
            word_align_attention(bare, 0, 0)
        with pytest.raises(ContractError, match="layer"):
            word_align_attention(rec, 2, 0)
        with pytest.raises(ContractError, match="head"):
            word_align_attention(rec, 0, 3)


class TestJsDivergence:
    def test_identical_distributions_are_zero(self):
        assert js_divergence([0.25, 0.25, 0.5], [0.25, 0.25, 0.5]) == 0.0

    def test_disjoint_point_masses_hit_the_bound(self):
        assert abs(js_divergence([1.0, 0.0], [0.0, 1.0]) - LN2) < 1e-15

    def test_closed_form_case(self):
        expected = 0.5 * math.log(4 / 3) + 0.25 * math.log(2 / 3) + 0.25 * math.log(2)
        got = js_divergence([1.0, 0.0], [0.5, 0.5])
        assert abs(got - expected) < 1e-12
        assert abs(got - 0.2158) < 1e-4

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            p = rng.dirichlet(np.full(n, 0.4))
            q = rng.dirichlet(np.full(n, 0.4))
            got = js_divergence(p, q)
            assert abs(got - js_oracle(p, q)) < 1e-12
            assert got == js_divergence(q, p)
            assert 0.0 <= got <= LN2 + 1e-12

    def test_sparse_supports_stay_in_bounds(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            p = rng.dirichlet(np.ones(6))
            q = rng.dirichlet(np.ones(6))
            mask_p, mask_q = rng.random(6) < 0.5, rng.random(6) < 0.5
            p, q = p * ~mask_p, q * ~mask_q
            if p.sum() == 0.0 or q.sum() == 0.0:
                continue
            p, q = p / p.sum(), q / q.sum()
            got = js_divergence(p, q)
            assert abs(got - js_oracle(p, q)) < 1e-12
            assert got <= LN2 + 1e-12

    def test_rejects_bad_inputs(self):
        with pytest.raises(ContractError, match="equal-length"):
            js_divergence([1.0], [0.5, 0.5])
        with pytest.raises(ContractError, match="negative"):
            js_divergence([1.5, -0.5], [0.5, 0.5])
        with pytest.raises(ContractError, match="sums to"):
            js_divergence([0.7, 0.7], [0.5, 0.5])


def two_head_dump(rng, num_sentences=3, layers=1, heads=2):
    records = []
    for _ in range(num_sentences):
        t = int(rng.integers(2, 8))
        records.append(random_attention_record(layers, heads, t, rng))
    return ActivationDump(layers, 4, heads, records)


def distance_oracle(dump, sentence_mean=False):
    """Brute-force head distances from word-aligned rows."""
    k = dump.num_layers * dump.num_heads
    sums = np.zeros((k, k))
    count = 0
    for rec in dump.sentences:
        aligned = [
            word_align_attention(rec, layer, head)
            for layer in range(dump.num_layers)
            for head in range(dump.num_heads)
        ]
        per_pair = np.zeros((k, k))
        for a in range(k):
            for b in range(k):
                if a == b:
                    continue
                per_pair[a, b] = sum(
                    js_oracle(aligned[a][row], aligned[b][row])
                    for row in range(rec.num_words)
                )
        if sentence_mean:
            sums += per_pair / rec.num_words
            count += 1
        else:
            sums += per_pair
            count += rec.num_words
    return sums / count


class TestHeadDistanceMatrix:
    def test_hand_case_single_sentence(self):
        head_a = np.array([[0.9, 0.1], [0.2, 0.8]])
        head_b = np.array([[0.5, 0.5], [0.5, 0.5]])
        rec = attention_record(
            np.stack([head_a, head_b])[None], [(0, 1), (1, 2)]
        )
        dump = ActivationDump(1, 4, 2, [rec])
        result = head_distance_matrix(dump)
        stored_a = np.asarray(rec.attentions[0, 0], dtype=np.float64)
        stored_b = np.asarray(rec.attentions[0, 1], dtype=np.float64)
        expected = 0.5 * (
            js_oracle(stored_a[0], stored_b[0]) + js_oracle(stored_a[1], stored_b[1])
        )
        assert result.values.shape == (2, 2)
        assert result.values[0, 0] == 0.0 and result.values[1, 1] == 0.0
        assert abs(result.values[0, 1] - expected) < 1e-12
        assert result.values[0, 1] == result.values[1, 0]
        assert result.corpus_tokens == 2

    def test_identical_heads_coincide(self):
        rng = np.random.default_rng(3)
        plane = rng.dirichlet(np.ones(4), size=4)
        rec = attention_record(np.stack([plane, plane])[None], [(0, 2), (2, 4)])
        dump = ActivationDump(1, 4, 2, [rec])
        result = head_distance_matrix(dump)
        np.testing.assert_array_equal(result.values, np.zeros((2, 2)))

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(4)
        dump = two_head_dump(rng, num_sentences=4, layers=2, heads=2)
        result = head_distance_matrix(dump)
        oracle = distance_oracle(dump)
        np.testing.assert_allclose(result.values, oracle, rtol=0, atol=1e-12)
        assert result.corpus_tokens == sum(r.num_words for r in dump.sentences)
        assert result.heads_per_layer == 2
        assert result.num_layers == 2

    def test_sentence_mean_matches_oracle(self):
        rng = np.random.default_rng(5)
        dump = two_head_dump(rng, num_sentences=5)
        result = head_distance_matrix(dump, sentence_mean=True)
        oracle = distance_oracle(dump, sentence_mean=True)
        np.testing.assert_allclose(result.values, oracle, rtol=0, atol=1e-12)
        assert result.corpus_tokens == len(dump.sentences)

    def test_invariants_on_random_dumps(self):
        rng = np.random.default_rng(6)
        dump = two_head_dump(rng, num_sentences=6, layers=3, heads=2)
        result = head_distance_matrix(dump)
        values = result.values
        np.testing.assert_array_equal(values, values.T)
        np.testing.assert_array_equal(np.diagonal(values), 0.0)
        assert values.min() >= 0.0 and values.max() <= LN2

    def test_thread_count_does_not_change_bits(self):
        rng = np.random.default_rng(8)
        dump = two_head_dump(rng, num_sentences=6)
        serial = head_distance_matrix(dump)
        threaded = head_distance_matrix(dump, threads=4)
        np.testing.assert_array_equal(serial.values, threaded.values)
        assert serial.corpus_tokens == threaded.corpus_tokens

    def test_rejects_headless_or_empty_dumps(self):
        rng = np.random.default_rng(9)
        rec = random_attention_record(1, 2, 3, rng)
        plain = SentenceRecord(
            rec.subword_tokens, rec.words, rec.word_spans, rec.activations
        )
        with pytest.raises(ContractError, match="no attention"):
            head_distance_matrix(ActivationDump(1, 4, 0, [plain]))
        with pytest.raises(ContractError, match="no sentences"):
            head_distance_matrix(ActivationDump(1, 4, 2, []))

    def test_type_validates_its_invariants(self):
        good = np.array([[0.0, 0.1], [0.1, 0.0]])
        HeadDistanceMatrix(good, 2, 10)
        with pytest.raises(ContractError, match="symmetric"):
            HeadDistanceMatrix(np.array([[0.0, 0.1], [0.2, 0.0]]), 2, 10)
        with pytest.raises(ContractError, match="diagonal"):
            HeadDistanceMatrix(np.array([[0.5, 0.1], [0.1, 0.0]]), 2, 10)
        with pytest.raises(ContractError, match="ln 2"):
            HeadDistanceMatrix(np.array([[0.0, 0.8], [0.8, 0.0]]), 2, 10)
        with pytest.raises(ContractError, match="multiple"):
            HeadDistanceMatrix(np.array([[0.0, 0.1], [0.1, 0.0]]), 3, 10)
        with pytest.raises(ContractError, match="square"):
            HeadDistanceMatrix(np.zeros((2, 3)), 1, 10)


def pairwise_distances(points):
    points = np.asarray(points, dtype=np.float64)
    diffs = points[:, None, :] - points[None, :, :]
    return np.sqrt((diffs * diffs).sum(axis=2))


class TestJacobi:
    def test_matches_lapack_eigenvalues(self):
        rng = np.random.default_rng(13)
        for n in (2, 3, 5, 8):
            raw = rng.standard_normal((n, n))
            sym = 0.5 * (raw + raw.T)
            eigvals, eigvecs, residual = _jacobi_eigh(sym, 1e-10, 100)
            assert residual < 1e-10
            np.testing.assert_allclose(
                np.sort(eigvals), np.linalg.eigvalsh(sym), rtol=0, atol=1e-9
            )
            np.testing.assert_allclose(
                eigvecs.T @ eigvecs, np.eye(n), rtol=0, atol=1e-10
            )
            np.testing.assert_allclose(
                eigvecs @ np.diag(eigvals) @ eigvecs.T, sym, rtol=0, atol=1e-9
            )

    def test_diagonal_input_converges_immediately(self):
        eigvals, eigvecs, residual = _jacobi_eigh(np.diag([3.0, 1.0, 2.0]), 1e-10, 0)
        np.testing.assert_array_equal(eigvals, [3.0, 1.0, 2.0])
        np.testing.assert_array_equal(eigvecs, np.eye(3))
        assert residual == 0.0


class TestClassicalMds:
    def test_all_zero_distances_collapse_to_origin(self):
        coords = classical_mds(np.zeros((4, 4)))
        np.testing.assert_array_equal(coords, np.zeros((4, 2)))

    def test_equilateral_triangle(self):
        distances = np.ones((3, 3)) - np.eye(3)
        coords = classical_mds(distances)
        recovered = pairwise_distances(coords)
        assert np.abs(recovered - distances).max() <= 1e-6

    def test_unit_square(self):
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        distances = pairwise_distances(corners)
        coords = classical_mds(distances)
        recovered = pairwise_distances(coords)
        assert np.abs(recovered - distances).max() <= 1e-6

    def test_random_planar_configurations_embed_exactly(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            n = int(rng.integers(3, 9))
            points = rng.standard_normal((n, 2))
            distances = pairwise_distances(points)
            coords = classical_mds(distances)
            recovered = pairwise_distances(coords)
            assert np.abs(recovered - distances).max() <= 1e-8

    def test_sign_convention_and_determinism(self):
        distances = pairwise_distances(
            np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 3.0], [4.0, 1.0]])
        )
        first = classical_mds(distances)
        second = classical_mds(distances)
        np.testing.assert_array_equal(first, second)
        for column in range(first.shape[1]):
            anchor = int(np.argmax(np.abs(first[:, column])))
            assert first[anchor, column] >= 0.0

    def test_duplicated_point_stays_coincident(self):
        base = np.array([[0.0, 0.0], [1.0, 0.5], [1.0, 0.5], [-1.0, 2.0]])
        coords = classical_mds(pairwise_distances(base))
        assert np.abs(coords[1] - coords[2]).max() < 1e-8

    def test_accepts_head_distance_matrix(self):
        rng = np.random.default_rng(15)
        dump = two_head_dump(rng, num_sentences=3, layers=2, heads=2)
        matrix = head_distance_matrix(dump)
        coords = classical_mds(matrix)
        assert coords.shape == (4, 2)
        assert np.all(np.isfinite(coords))

    def test_nonconvergence_reports_residual(self):
        distances = np.ones((3, 3)) - np.eye(3)
        with pytest.raises(DataError, match="converge"):
            classical_mds(distances, max_sweeps=0)

    def test_rejects_malformed_matrices(self):
        with pytest.raises(ContractError, match="square"):
            classical_mds(np.zeros((2, 3)))
        with pytest.raises(ContractError, match="symmetric"):
            classical_mds(np.array([[0.0, 1.0], [2.0, 0.0]]))
        with pytest.raises(ContractError, match="diagonal"):
            classical_mds(np.array([[1.0, 1.0], [1.0, 0.0]]))
        with pytest.raises(ContractError, match="nonnegative"):
            classical_mds(np.array([[0.0, -1.0], [-1.0, 0.0]]))
        with pytest.raises(ContractError, match="out_dim"):
            classical_mds(np.zeros((2, 2)), out_dim=0)


class TestReportHelpers:
    def test_csv_layout(self):
        coords = np.array([[1.5, -2.25], [0.5, 0.25], [3.0, 0.0], [0.0, 1.0]])
        text = head_coordinates_csv(coords, heads_per_layer=2)
        lines = text.splitlines()
        assert lines[0] == "head,layer,x,y"
        assert lines[1] == "0,0,1.5,-2.25"
        assert lines[3] == "2,1,3.0,0.0"
        assert len(lines) == 5 and text.endswith("\n")

    def test_svg_is_deterministic_and_well_formed(self):
        coords = classical_mds(np.ones((3, 3)) - np.eye(3))
        svg = head_scatter_svg(coords, heads_per_layer=3)
        assert svg == head_scatter_svg(coords, heads_per_layer=3)
        assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")
        assert svg.count("<circle ") == 3
        assert "layer 0" in svg

    def test_svg_handles_coincident_points(self):
        svg = head_scatter_svg(np.zeros((4, 2)), heads_per_layer=2)
        assert svg.count("<circle ") == 4

    def test_helpers_validate_shapes(self):
        with pytest.raises(ContractError, match="coordinates"):
            head_coordinates_csv(np.zeros((2, 3)), 1)
        with pytest.raises(ContractError, match="multiple"):
            head_scatter_svg(np.zeros((3, 2)), 2)
