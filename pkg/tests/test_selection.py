import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegemotion.core import COMPONENTS, DEAP_CHANNELS, LOBES, SELECTED_CHANNELS, DomainError
from eegemotion.ensemble.forest import EnsembleSpec
from eegemotion.selection import (
    ChannelRanking,
    CorrelationTable,
    DegenerateDataError,
    build_correlation_table,
    emotion_importance_index,
    first_principal_component,
    gini_channel_ranking,
    mean_abs_pearson,
    pearson_pvalue,
    select_top_channels,
)

GOLDEN = Path(__file__).parent / "golden"


def brute_pearson(z, y):
    n = len(z)
    mz = sum(z) / n
    my = sum(y) / n
    sxy = sum((a - mz) * (b - my) for a, b in zip(z, y))
    sxx = sum((a - mz) ** 2 for a in z)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def test_mean_abs_pearson_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n_sub = int(rng.integers(1, 8))
        zs, ys = [], []
        for _ in range(n_sub):
            n = int(rng.integers(5, 60))
            z = rng.standard_normal(n)
            zs.append(z)
            ys.append(rng.uniform(-1, 1) * z + rng.standard_normal(n))
        ref = np.mean([abs(brute_pearson(z.tolist(), y.tolist())) for z, y in zip(zs, ys)])
        assert abs(mean_abs_pearson(zs, ys).r - ref) <= 1e-10


def test_pearson_excludes_degenerate_subjects():
    z = [np.arange(10.0), np.ones(10), np.arange(2.0)]
    y = [np.arange(10.0) ** 2, np.arange(10.0), np.arange(2.0)]
    res = mean_abs_pearson(z, y)
    assert len(res.per_subject_r) == 1
    assert [s for s, _ in res.excluded] == [1, 2]


def test_pearson_pvalue_against_scipy():
    from scipy import stats

    rng = np.random.default_rng(1)
    z = rng.standard_normal(40)
    y = 0.3 * z + rng.standard_normal(40)
    r, p = stats.pearsonr(z, y)
    assert pearson_pvalue(r, 40) == pytest.approx(p, rel=1e-9)


def test_pca_recovers_planted_direction():
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = int(rng.integers(2, 8))
        w = rng.standard_normal(d)
        w /= np.linalg.norm(w)
        t = rng.standard_normal(500)
        X = np.outer(t, w) + 0.01 * rng.standard_normal((500, d))
        got = first_principal_component(X).w
        angle = math.degrees(math.acos(min(1.0, abs(float(got @ w)))))
        assert angle < 1.0


def test_pca_sign_and_projection():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((50, 4))
    p = first_principal_component(X, lobe="Frontal", band="gamma", subject="s01")
    assert p.w[np.argmax(np.abs(p.w))] > 0
    assert np.allclose(p.z, (X - X.mean(0)) @ p.w)
    assert np.linalg.norm(p.w) == pytest.approx(1.0)
    assert 0 < p.explained_variance_ratio <= 1
    assert (p.lobe, p.band, p.subject) == ("Frontal", "gamma", "s01")


def test_pca_degenerate_inputs():
    with pytest.raises(DegenerateDataError):
        first_principal_component(np.ones((10, 3)))
    with pytest.raises(DomainError):
        first_principal_component(np.zeros((3, 3)))
    with pytest.raises(DomainError):
        first_principal_component(np.zeros((10, 1)))


def published_gini():
    rows = [ln.split("\t") for ln in (GOLDEN / "gamma_gini_published.tsv").read_text().splitlines()[1:]]
    chans = tuple(r[0] for r in rows)
    vals = np.array([[float(v) for v in r[1:]] for r in rows])
    return chans, vals


def test_eii_arithmetic_on_published_row():
    eii = emotion_importance_index(np.array([[0.0561, 0.0610, 0.0586]]))
    assert round(float(eii[0]), 4) == 0.0586


def test_published_gini_rows_reproduce_eii_column():
    chans, vals = published_gini()
    eii = emotion_importance_index(vals[:, :3])
    assert np.all(np.abs(eii - vals[:, 3]) <= 0.5e-4 + 1e-12)


def test_top8_from_published_eii_column():
    chans, vals = published_gini()
    # gi columns only matter through their mean; put the published EII in every column
    ranking = ChannelRanking(chans, np.repeat(vals[:, 3:4], 3, axis=1))
    top = select_top_channels(ranking, 8)
    assert set(top) == {"T7", "T8", "Fp1", "F7", "FC5", "O2", "P7", "FC6"}
    assert set(top) == set(SELECTED_CHANNELS)


def test_select_top_ties_use_canonical_order():
    chans = ("T8", "Fp1", "T7")
    r = ChannelRanking(chans, np.full((3, 3), 1 / 3))
    assert select_top_channels(r, 3) == ["Fp1", "T7", "T8"]
    with pytest.raises(DomainError):
        select_top_channels(r, 4)


@pytest.mark.parametrize("seed", range(20))
def test_gini_importances_normalized(seed):
    rng = np.random.default_rng(seed)
    chans = DEAP_CHANNELS[:6]
    X = {f"s{k}": rng.standard_normal((40, 6)) for k in range(2)}
    Y = {s: np.column_stack([x[:, 0] + 0.1 * rng.standard_normal(40), rng.uniform(1, 9, 40), x[:, 1]]) for s, x in X.items()}
    spec = EnsembleSpec("rf-regressor", n_trees=10, max_features="third", min_samples_leaf=5)
    r = gini_channel_ranking(X, Y, chans, iterations=2, spec=spec, seed=seed)
    assert np.allclose(r.gi.sum(axis=0), 1.0, atol=1e-9)
    for gi in r.per_subject.values():
        assert np.allclose(gi.sum(axis=0), 1.0, atol=1e-9)
    assert np.all(r.gi >= 0)
    assert np.allclose(r.eii, r.gi.mean(axis=1))


def test_gini_ranking_finds_informative_channel_and_constant_target():
    rng = np.random.default_rng(5)
    chans = DEAP_CHANNELS[:4]
    X = rng.standard_normal((60, 4))
    Y = np.column_stack([3 * X[:, 2], 3 * X[:, 2] + 0.1 * rng.standard_normal(60), np.full(60, 5.0)])
    spec = EnsembleSpec("rf-regressor", n_trees=20, max_features="third", min_samples_leaf=5)
    r = gini_channel_ranking({"s1": X}, {"s1": Y}, chans, iterations=1, spec=spec)
    assert select_top_channels(r, 1) == [chans[2]]
    assert np.allclose(r.gi[:, 2], 0.25)
    with pytest.raises(DomainError):
        gini_channel_ranking({"s1": X}, {"s1": Y}, chans, iterations=0, spec=spec)


def test_ranking_tsv_has_rank_order():
    chans = ("T7", "Fp1", "O2")
    gi = np.array([[0.5, 0.5, 0.5], [0.3, 0.3, 0.3], [0.2, 0.2, 0.2]])
    lines = ChannelRanking(chans, gi).to_tsv().splitlines()
    assert lines[0].split("\t") == ["rank", "channel", "arousal", "valence", "dominance", "eii"]
    assert [ln.split("\t")[1] for ln in lines[1:]] == ["T7", "Fp1", "O2"]


def test_correlation_table_on_planted_lobe():
    rng = np.random.default_rng(6)
    bp, ratings = {}, {}
    temporal = [DEAP_CHANNELS.index(c) for c in LOBES["Temporal"]]
    for s in range(4):
        n = 60
        y = rng.uniform(1, 9, (n, 3))
        x = rng.standard_normal((n, 32, 5))
        x[:, temporal, 4] += 3 * y[:, [1]]
        bp[f"s{s}"] = x
        ratings[f"s{s}"] = y
    t = build_correlation_table(bp, ratings)
    assert t.r.shape == (5, 6, 3)
    assert t.best_for_component("arousal") == ("gamma", "Temporal")
    assert t.best_band_per_lobe()["Temporal"] == "gamma"
    j = t.lobes.index("Temporal")
    assert t.significant[4, j, COMPONENTS.index("arousal")]
    assert len(t.to_tsv().splitlines()) == 1 + 5 * 6


def test_significance_needs_31_of_32_subjects():
    frac = np.zeros((1, 1, 3))
    frac[0, 0] = [31 / 32, 30 / 32, 1.0]
    t = CorrelationTable(("gamma",), ("Frontal",), np.zeros((1, 1, 3)), frac, 32)
    assert t.significant[0, 0].tolist() == [True, False, True]


@given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
@settings(max_examples=50)
def test_eii_is_mean_of_components(row):
    assert emotion_importance_index(np.array([row]))[0] == pytest.approx(sum(row) / 3)
