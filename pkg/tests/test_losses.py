import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nptlab.geometry import build_etf
from nptlab.losses import (Batch, LossWeights, forward, grad_check,
                           loss_clip, loss_lc, loss_mi, loss_total, param_gradients, rep_gradients)
from nptlab.model import ModelConfig, StaleCacheError, init_model, predict_probs, with_config

from conftest import unit_rows


# --- loop-form oracles ---

def clip_oracle(z, y, g, lam):
    total = 0.0
    for n in range(len(z)):
        logits = [np.dot(z[n], g[k]) / lam for k in range(len(g))]
        m = max(logits)
        lse = m + np.log(sum(np.exp(l - m) for l in logits))
        total += lse - logits[y[n]]
    return total / len(z)


def lc_oracle(g, E_W=1.0):
    K = len(g)
    return sum((np.dot(g[i], g[j]) + E_W / (K - 1)) ** 2 for i in range(K) for j in range(K) if i != j)


def mi_oracle(z, y, g, E_W=1.0, E_H=1.0):
    return sum((np.dot(z[n], g[y[n]]) - np.sqrt(E_W * E_H)) ** 2 for n in range(len(z)))


def total_oracle(z, y, g, lam, w1, w2):
    return clip_oracle(z, y, g, lam) + w1 * lc_oracle(g) + w2 * mi_oracle(z, y, g)


def central_fd(f, x, h=1e-6):
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        out[idx] = (f(xp) - f(xm)) / (2 * h)
    return out


def toy(seed, K=4, N=12, d=6):
    r = np.random.default_rng(seed)
    y = np.concatenate([np.arange(K), r.integers(0, K, N - K)])
    return unit_rows(r.standard_normal((K, d))), unit_rows(r.standard_normal((N, d))), y


# --- values ---

def test_loss_values_match_oracles():
    g, z, y = toy(0)
    P = predict_probs(z, g, 0.1)
    assert loss_clip(P, y) == pytest.approx(clip_oracle(z, y, g, 0.1), rel=1e-12)
    assert loss_lc(g) == pytest.approx(lc_oracle(g), rel=1e-12)
    assert loss_mi(z, y, g) == pytest.approx(mi_oracle(z, y, g), rel=1e-12)
    br = loss_total(P, y, g, z, LossWeights(0.3, 0.8))
    assert br.total == pytest.approx(total_oracle(z, y, g, 0.1, 0.3, 0.8), rel=1e-12)


def test_trivial_loss_values():
    assert loss_clip([[1.0, 0.0], [0.0, 1.0]], [0, 1]) == 0.0
    assert loss_clip(np.full((3, 4), 0.25), [0, 1, 2]) == pytest.approx(np.log(4))
    assert loss_lc(build_etf(6, 8, 0).vectors) < 1e-18
    assert loss_lc(np.tile([[1.0, 0.0]], (3, 1))) == pytest.approx(6 * 1.5 ** 2)
    g = build_etf(3, 3, 0).vectors
    assert loss_mi(g, [0, 1, 2], g) < 1e-20
    assert loss_mi([[0.0, 1.0]], [0], [[1.0, 0.0], [0.0, 1.0]]) == pytest.approx(1.0)


def test_clip_clamps_underflow(caplog):
    value, clamped = loss_clip([[1.0, 0.0]], [1], return_clamped=True)
    assert clamped and value == pytest.approx(-np.log(1e-300))
    assert "clamped" in caplog.text


def test_default_weights():
    w = LossWeights()
    assert (w.w1, w.w2) == (0.3, 0.8)
    with pytest.raises(ValueError):
        LossWeights(-0.1, 1.0)


# --- representation-level gradients ---

@pytest.mark.parametrize("seed", range(3))
def test_rep_gradients_match_fd(seed):
    g, z, y = toy(seed)
    lam, w = 0.2, LossWeights(0.3, 0.8)
    rg = rep_gradients(z, y, g, w, lam)
    dg = central_fd(lambda gg: total_oracle(z, y, gg, lam, 0.3, 0.8), g)
    dz = central_fd(lambda zz: total_oracle(zz, y, g, lam, 0.3, 0.8), z)
    assert np.abs(rg.d_text - dg).max() < 1e-6
    assert np.abs(rg.d_image - dz).max() < 1e-6
    dg_lc = central_fd(lc_oracle, g)
    assert np.abs(rg.components["lc"][0] - dg_lc).max() < 1e-6
    assert np.all(rg.components["lc"][1] == 0)


def test_cohesion_repulsion_split():
    g, z, y = toy(5)
    rg = rep_gradients(z, y, g, LossWeights(), 0.1)
    assert np.allclose(rg.cohesion + rg.repulsion, rg.components["clip"][0])
    P = predict_probs(z, g, 0.1)
    k = 2
    own = sum((P[n, k] - 1) * z[n] for n in range(len(z)) if y[n] == k) / (len(z) * 0.1)
    assert np.allclose(rg.cohesion[k], own)
    assert rg.cohesion_count[k] == np.sum(y == k) and rg.repulsion_count[k] == len(y) - np.sum(y == k)


def test_zero_weights_reduce_to_clip():
    g, z, y = toy(1)
    rg = rep_gradients(z, y, g, LossWeights(0, 0), 0.1)
    assert np.array_equal(rg.d_text, rg.components["clip"][0])


def test_lc_gradient_vanishes_at_etf_tangentially():
    g = build_etf(5, 8, 1).vectors
    dg = rep_gradients(g, np.arange(5), g, LossWeights(1, 0), 1.0).components["lc"][0]
    tangential = dg - np.sum(dg * g, axis=1, keepdims=True) * g
    assert np.abs(tangential).max() < 1e-12


# --- parameter-level gradients ---

def small_model(seed, vp=True):
    p = init_model(ModelConfig(d_e=8, b=2, d=16, K_total=4, raw_dim=16, lambda_temp=0.1, init_seed=seed))
    p = with_config(p, vision_prompt_enabled=vp)
    r = np.random.default_rng(seed)
    p.context_tokens = r.standard_normal(p.context_tokens.shape) * 0.3
    p.vision_prompt = r.standard_normal(8) * 0.3
    y = np.concatenate([np.arange(4), r.integers(0, 4, 16)])
    return p, Batch(r.standard_normal((20, 16)), y, np.arange(4))


@pytest.mark.parametrize("vp", [False, True])
def test_grad_check_passes(vp):
    p, batch = small_model(7, vp)
    rep = grad_check(p, batch, LossWeights(0.3, 0.8))
    assert rep.ok(1e-5), rep
    assert rep.n_checked == 16 + (8 if vp else 0)


def test_grad_check_catches_wrong_gradient(monkeypatch):
    import nptlab.losses as L
    p, batch = small_model(3)
    orig = L.param_gradients

    def broken(*a, **k):
        pg = orig(*a, **k)
        pg.context_tokens = pg.context_tokens * 1.01
        return pg

    monkeypatch.setattr(L, "param_gradients", broken)
    assert not grad_check(p, batch, LossWeights()).ok(1e-5)


def test_param_gradient_descends():
    p, batch = small_model(11)
    w = LossWeights()
    pg = param_gradients(p, batch, w)
    q = p.copy()
    q.step(pg.context_tokens, pg.vision_prompt, 1e-4)
    f = forward(q, batch)
    after = loss_total(f.probs, batch.labels, f.text_reps, f.image_reps, w).total
    assert after < pg.losses.total


def test_stale_forward_rejected():
    p, batch = small_model(2)
    fwd = forward(p, batch)
    p.step(np.zeros_like(p.context_tokens), None, 0.1)
    with pytest.raises(StaleCacheError):
        param_gradients(p, batch, LossWeights(), fwd=fwd)


def test_batch_from_global():
    b = Batch.from_global(np.zeros((3, 2)), [7, 5, 7], [5, 7])
    assert b.labels.tolist() == [1, 0, 1]
    with pytest.raises(ValueError):
        Batch.from_global(np.zeros((1, 2)), [3], [5, 7])


# --- properties ---

@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_losses_nonnegative(seed):
    g, z, y = toy(seed)
    br = loss_total(predict_probs(z, g, 0.05), y, g, z, LossWeights(0.3, 0.8))
    assert br.clip >= 0 and br.lc >= 0 and br.mi >= 0
    assert br.total >= br.clip


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), w1=st.floats(0, 3), w2=st.floats(0, 3))
def test_rep_gradient_linear_in_weights(seed, w1, w2):
    g, z, y = toy(seed)
    rg = rep_gradients(z, y, g, LossWeights(w1, w2), 0.1)
    c = rg.components
    assert np.allclose(rg.d_text, c["clip"][0] + w1 * c["lc"][0] + w2 * c["mi"][0])
    assert np.allclose(rg.d_image, c["clip"][1] + w2 * c["mi"][1])
