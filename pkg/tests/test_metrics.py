import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nptlab.geometry import build_etf
from nptlab.metrics import (REPORT_FIELDS, DegenerateGeometryError, EmptyClassError, class_prototypes,
                            classifier_collapse_nc3, collapse_report, delta_lcd, delta_mid,
                            feature_collapse_nc1, prototype_collapse_nc2)

from conftest import random_orthogonal, unit_rows


# --- brute-force oracles, written loop by loop ---

def lcd_oracle(g, E_W=1.0):
    K = len(g)
    mu = -1.0 / (K - 1)
    terms = [float(np.dot(g[i], g[j])) - E_W * mu for i in range(K) for j in range(K) if i != j]
    return sum(terms) / len(terms)


def mid_oracle(z, y, g, E_W=1.0, E_H=1.0):
    total = 0.0
    for n in range(len(z)):
        total += float(np.dot(z[n], g[y[n]])) - np.sqrt(E_W * E_H)
    return total / len(z)


def protos_oracle(z, y, K):
    protos = []
    for k in range(K):
        members = [z[n] for n in range(len(z)) if y[n] == k]
        protos.append(sum(members) / len(members))
    return np.array(protos), sum(z) / len(z)


def nc1_oracle(z, y, K):
    protos, _ = protos_oracle(z, y, K)
    traces = []
    for k in range(K):
        members = [z[n] for n in range(len(z)) if y[n] == k]
        cov = sum(np.outer(m - protos[k], m - protos[k]) for m in members) / len(members)
        traces.append(np.trace(cov))
    return float(np.mean(traces))


def centered_oracle(z, y, K):
    protos, zG = protos_oracle(z, y, K)
    return np.array([(p - zG) / np.linalg.norm(p - zG) for p in protos])


def nc2_oracle(z, y, K):
    zt = centered_oracle(z, y, K)
    diff = np.zeros((K, K))
    for i in range(K):
        for j in range(K):
            target = 1.0 if i == j else -1.0 / (K - 1)
            diff[i, j] = np.dot(zt[i], zt[j]) - target
    return float(np.sqrt((diff ** 2).sum()))


def nc3_oracle(g, z, y):
    K = len(g)
    zt = centered_oracle(z, y, K)
    return float(np.mean([np.linalg.norm(g[k] / np.linalg.norm(g[k]) - zt[k]) for k in range(K)]))


def random_set(rng, K=5, N=30, d=8):
    y = np.concatenate([np.arange(K), rng.integers(0, K, N - K)])
    return unit_rows(rng.standard_normal((K, d))), unit_rows(rng.standard_normal((N, d))), y


# --- delta_lcd ---

def test_lcd_zero_on_etf():
    assert abs(delta_lcd(build_etf(7, 10, 3).vectors)) < 1e-9


def test_lcd_identical_reps():
    v = unit_rows([[1.0, 2.0, 3.0]] * 3)
    assert delta_lcd(v) == pytest.approx(1.5, abs=1e-12)


def test_lcd_matches_bruteforce(rng):
    g = unit_rows(rng.standard_normal((4, 6)))
    assert delta_lcd(g) == pytest.approx(lcd_oracle(g), abs=1e-12)
    assert delta_lcd(g, 2.0) == pytest.approx(lcd_oracle(g, 2.0), abs=1e-12)


def test_lcd_needs_two():
    with pytest.raises(ValueError):
        delta_lcd(np.ones((1, 3)))


# --- delta_mid ---

def test_mid_perfect_alignment():
    g = build_etf(4, 6, 0).vectors
    y = np.array([0, 1, 2, 3, 3, 1])
    signed, err = delta_mid(g[y], y, g)
    assert abs(signed) < 1e-12 and abs(err) < 1e-12


def test_mid_orthogonal_single():
    signed, err = delta_mid([[0.0, 1.0]], [0], [[1.0, 0.0], [0.0, 1.0]])
    assert signed == pytest.approx(-1.0) and err == pytest.approx(1.0)


def test_mid_matches_bruteforce(rng):
    g, z, y = random_set(rng)
    signed, err = delta_mid(z, y, g)
    assert signed == pytest.approx(mid_oracle(z, y, g), abs=1e-12)
    assert err == pytest.approx(-signed)


def test_mid_errors():
    g = np.eye(2)
    with pytest.raises(ValueError):
        delta_mid(np.zeros((0, 2)), [], g)
    with pytest.raises(ValueError):
        delta_mid([[1.0, 0.0]], [2], g)


# --- prototypes and NC1-NC3 ---

def test_prototypes_one_sample_per_class(rng):
    z = unit_rows(rng.standard_normal((4, 5)))
    protos, zG = class_prototypes(z, np.arange(4))
    assert np.allclose(protos, z)
    assert np.allclose(zG, z.mean(axis=0))


def test_prototype_of_antipodal_pair_is_zero():
    protos, _ = class_prototypes([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], [0, 0, 1])
    assert np.allclose(protos[0], 0.0)


def test_prototypes_match_bruteforce(rng):
    _, z, y = random_set(rng)
    protos, zG = class_prototypes(z, y, 5)
    p2, zG2 = protos_oracle(z, y, 5)
    assert np.allclose(protos, p2, atol=1e-12) and np.allclose(zG, zG2, atol=1e-12)


def test_empty_class_identified():
    with pytest.raises(EmptyClassError) as info:
        class_prototypes(np.eye(3), [0, 0, 2], K=3)
    assert info.value.cls == 1


def test_nc1_cases(rng):
    z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert feature_collapse_nc1(z, [0, 0, 1]) == 0.0
    assert feature_collapse_nc1([[1.0, 0.0], [-1.0, 0.0]], [0, 0]) == pytest.approx(1.0)
    _, z, y = random_set(rng)
    assert feature_collapse_nc1(z, y, 5) == pytest.approx(nc1_oracle(z, y, 5), abs=1e-12)


def test_nc2_cases(rng):
    etf = build_etf(5, 8, 2).vectors
    assert prototype_collapse_nc2(etf, np.arange(5)) < 1e-6
    assert prototype_collapse_nc2([[1.0, 0.0], [-1.0, 0.0]], [0, 1]) < 1e-12
    _, z, y = random_set(rng)
    assert prototype_collapse_nc2(z, y, 5) == pytest.approx(nc2_oracle(z, y, 5), abs=1e-12)


def test_nc2_degenerate():
    # both class means equal the global mean
    z = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
    with pytest.raises(DegenerateGeometryError):
        prototype_collapse_nc2(z, [0, 0, 1, 1])


def test_nc3_cases(rng):
    _, z, y = random_set(rng)
    from nptlab.metrics import centered_prototypes
    assert classifier_collapse_nc3(centered_prototypes(z, y, 5), z, y) < 1e-12
    g = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert classifier_collapse_nc3(g, [[-1.0, 0.0], [1.0, 0.0]], [0, 1]) == pytest.approx(2.0)
    g, z, y = random_set(rng)
    assert classifier_collapse_nc3(g, z, y) == pytest.approx(nc3_oracle(g, z, y), abs=1e-12)


# --- properties ---

@settings(max_examples=50, deadline=None)
@given(K=st.integers(2, 12), d=st.integers(2, 16), seed=st.integers(0, 10_000))
def test_lcd_nonnegative(K, d, seed):
    g = unit_rows(np.random.default_rng(seed).standard_normal((K, d)))
    assert delta_lcd(g) >= -1e-9


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), N=st.integers(1, 40))
def test_mid_range(seed, N):
    r = np.random.default_rng(seed)
    g = unit_rows(r.standard_normal((3, 5)))
    z = unit_rows(r.standard_normal((N, 5)))
    signed, _ = delta_mid(z, r.integers(0, 3, N), g)
    assert -2 - 1e-9 <= signed <= 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_permutation_and_rotation_invariance(seed):
    r = np.random.default_rng(seed)
    g, z, y = random_set(r, K=4, N=20, d=6)
    base = collapse_report(g, z, y).flat()
    perm = r.permutation(len(y))
    permuted = collapse_report(g, z[perm], y[perm]).flat()
    Q = random_orthogonal(6, r)
    rotated = collapse_report(g @ Q.T, z @ Q.T, y).flat()
    for k in ("delta_lcd", "delta_mid_signed", "mid_error", "nc1", "nc2", "nc3"):
        assert permuted[k] == pytest.approx(base[k], abs=1e-12)
        assert rotated[k] == pytest.approx(base[k], abs=1e-9)


def test_report_serialization(rng):
    g, z, y = random_set(rng)
    rep = collapse_report(g, z, y)
    d = json.loads(rep.to_json())
    for k in ("delta_lcd", "delta_mid_signed", "mid_error", "nc1", "nc2", "nc3"):
        assert d[k] == getattr(rep, k)
    header, row = rep.to_csv_row(header=True).strip().split("\n")
    assert header.split(",") == list(REPORT_FIELDS)
    assert float(row.split(",")[0]) == rep.delta_lcd
    assert rep.mid_error == pytest.approx(-rep.delta_mid_signed)
