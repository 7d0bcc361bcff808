"""Destination CVAE: encoder/decoder contracts, losses, prior sampling.

The KL Monte-Carlo oracle and the two-corridor multimodality check are the
load-bearing tests here; everything else pins shapes and determinism.
"""

import numpy as np
import pytest
import torch

from scenemotion.geometry import heatmap_expectation
from scenemotion.goalnet import (
    GoalLatent,
    GoalNet,
    GoalNetConfig,
    goal_loss,
    history_heatmap_channels,
    sample_goals,
    train_goalnet,
)


def _cfg(**kw) -> GoalNetConfig:
    base = dict(n_history=2, joint_count=3, image_size=(32, 56),
                channel_scale=0.125, destination_posterior=True)
    base.update(kw)
    return GoalNetConfig(**base)


def _inputs(cfg, batch=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    img = torch.rand(batch, 3, *cfg.image_size, generator=g)
    nj = cfg.n_history * cfg.joint_count
    hm = torch.rand(batch, nj, *cfg.grid_size, generator=g)
    return img, hm


# ── encoder ──────────────────────────────────────────────────────────────

def test_encode_latent_dims():
    cfg = _cfg()
    torch.manual_seed(0)
    model = GoalNet(cfg).eval()
    img, hm = _inputs(cfg)
    latent = model.encode(hm, img)
    assert latent.mu.shape == (2, 30)
    assert latent.sigma.shape == (2, 30)
    assert (latent.sigma > 0).all()


def test_encode_zeroed_head_returns_bias():
    cfg = _cfg()
    torch.manual_seed(0)
    model = GoalNet(cfg).eval()
    with torch.no_grad():
        model.fc_mu.weight.zero_()
        model.fc_mu.bias.copy_(torch.arange(30, dtype=torch.float32))
    img, hm = _inputs(cfg)
    latent = model.encode(hm, img)
    assert torch.equal(latent.mu[0], torch.arange(30, dtype=torch.float32))


def test_encode_sensitive_to_image():
    cfg = _cfg()
    torch.manual_seed(1)
    model = GoalNet(cfg).eval()
    img_a, hm = _inputs(cfg, batch=1, seed=1)
    img_b, _ = _inputs(cfg, batch=1, seed=2)
    la = model.encode(hm, img_a)
    lb = model.encode(hm, img_b)
    assert not torch.allclose(la.mu, lb.mu)


def test_encode_shape_mismatch_errors():
    cfg = _cfg()
    model = GoalNet(cfg)
    img, hm = _inputs(cfg)
    with pytest.raises(ValueError):
        model.encode(hm[:, :-1], img)
    with pytest.raises(ValueError):
        model.encode(hm, img[:, :, :-2])


def test_encoder_row_shapes():
    cfg = _cfg()
    torch.manual_seed(0)
    model = GoalNet(cfg).eval()
    img, hm = _inputs(cfg, batch=1)
    grabbed = {}
    cond = model.condition(img, hm, collect=grabbed)
    model.posterior(cond, collect=grabbed)
    c64, c128, c256, c512 = 8, 16, 32, 64  # scale 0.125
    assert grabbed["3"].shape[1:] == (c64, 16, 28)
    assert grabbed["4"].shape[1:] == (c64, 8, 14)
    assert grabbed["5"].shape[1:] == (c64, 8, 14)
    assert grabbed["6"].shape[1:] == (c64, 8, 14)
    assert grabbed["7"].shape[1:] == (c128, 4, 7)
    assert grabbed["8"].shape[1:] == (c256, 2, 4)
    assert grabbed["9"].shape[1:] == (c512, 1, 2)
    assert grabbed["10"].shape[1:] == (c512,)
    assert grabbed["11"].shape[1:] == (30,)
    assert grabbed["12"].shape[1:] == (30,)


# ── decoder ──────────────────────────────────────────────────────────────

def test_decode_output_shape_and_determinism():
    cfg = _cfg()
    torch.manual_seed(0)
    model = GoalNet(cfg).eval()
    img, hm = _inputs(cfg, batch=1)
    with torch.no_grad():
        cond = model.condition(img, hm)
        z = torch.randn(1, 30, generator=torch.Generator().manual_seed(3))
        a = model.decode(z, cond)
        b = model.decode(z, cond)
    assert a.shape == (1, 1, 8, 14)
    assert torch.equal(a, b)


def test_decode_lipschitz_in_z():
    cfg = _cfg()
    torch.manual_seed(0)
    model = GoalNet(cfg).eval()
    img, hm = _inputs(cfg, batch=1)
    with torch.no_grad():
        cond = model.condition(img, hm)
        z = torch.randn(1, 30, generator=torch.Generator().manual_seed(4))
        base = model.decode(z, cond)
        d1 = (model.decode(z + 1e-3, cond) - base).abs().max().item()
        d2 = (model.decode(z + 1e-4, cond) - base).abs().max().item()
    assert d1 > 0
    # First-order scaling: shrinking the perturbation 10x shrinks the output
    # response ~10x.
    assert 4.0 < d1 / max(d2, 1e-12) < 25.0


# ── losses ───────────────────────────────────────────────────────────────

def _latent(mu, sigma):
    return GoalLatent(mu=torch.as_tensor(mu, dtype=torch.float64)[None],
                      sigma=torch.as_tensor(sigma, dtype=torch.float64)[None])


def test_kl_zero_at_prior():
    lat = _latent(np.zeros(30), np.ones(30))
    _, kl = goal_loss(torch.zeros(1, 2), torch.zeros(1, 2), lat)
    assert float(kl) == pytest.approx(0.0, abs=1e-12)


def test_kl_half_for_unit_mean():
    mu = np.zeros(30)
    mu[0] = 1.0
    _, kl = goal_loss(torch.zeros(1, 2), torch.zeros(1, 2),
                      _latent(mu, np.ones(30)))
    assert float(kl) == pytest.approx(0.5, abs=1e-12)


def test_kl_nonnegative_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lat = _latent(rng.normal(0, 2, 8), rng.uniform(0.2, 3, 8))
        _, kl = goal_loss(torch.zeros(1, 2), torch.zeros(1, 2), lat)
        assert float(kl) >= 0.0


def test_kl_matches_monte_carlo():
    # Independent oracle: KL = E_q[log q(z) - log p(z)] over 1e6 draws.
    rng = np.random.default_rng(42)
    mu = rng.normal(0, 1, 4)
    sigma = rng.uniform(0.5, 2.0, 4)
    _, kl = goal_loss(torch.zeros(1, 2), torch.zeros(1, 2), _latent(mu, sigma))

    z = rng.normal(mu, sigma, size=(1_000_000, 4))
    log_q = -0.5 * ((z - mu) / sigma) ** 2 - np.log(sigma)
    log_p = -0.5 * z ** 2
    mc = np.mean(np.sum(log_q - log_p, axis=1))
    assert abs(float(kl) - mc) / abs(mc) < 0.01


def test_kl_gradient_matches_finite_differences():
    mu0 = np.array([0.3, -1.2, 0.7])
    sigma0 = np.array([0.8, 1.1, 0.5])
    mu = torch.tensor(mu0, dtype=torch.float64, requires_grad=True)
    lat = GoalLatent(mu=mu[None], sigma=torch.tensor(sigma0)[None])
    _, kl = goal_loss(torch.zeros(1, 2, dtype=torch.float64),
                      torch.zeros(1, 2, dtype=torch.float64), lat)
    kl.backward()
    eps = 1e-5
    for i in range(3):
        hi, lo = mu0.copy(), mu0.copy()
        hi[i] += eps
        lo[i] -= eps

        def val(m):
            _, k = goal_loss(torch.zeros(1, 2, dtype=torch.float64),
                             torch.zeros(1, 2, dtype=torch.float64),
                             _latent(m, sigma0))
            return float(k)

        fd = (val(hi) - val(lo)) / (2 * eps)
        rel = abs(fd - float(mu.grad[i])) / max(abs(fd), 1e-12)
        assert rel < 1e-4


def test_goal_loss_rejects_nonpositive_sigma():
    lat = _latent(np.zeros(3), np.array([1.0, -0.1, 1.0]))
    with pytest.raises(ValueError):
        goal_loss(torch.zeros(1, 2), torch.zeros(1, 2), lat)


def test_dest_loss_matches_naive_loop():
    rng = np.random.default_rng(1)
    pred = rng.normal(0, 10, (6, 2))
    gt = rng.normal(0, 10, (6, 2))
    l_dest, _ = goal_loss(torch.tensor(pred), torch.tensor(gt),
                          _latent(np.zeros(2), np.ones(2)))
    naive = np.mean([abs(gt[i, 0] - pred[i, 0]) + abs(gt[i, 1] - pred[i, 1])
                     for i in range(6)])
    assert float(l_dest) == pytest.approx(naive, abs=1e-9)


# ── sampling ─────────────────────────────────────────────────────────────

def test_sample_goals_seeded_and_nested():
    cfg = _cfg()
    torch.manual_seed(0)
    model = GoalNet(cfg).eval()
    img, hm = _inputs(cfg, batch=1)
    a = sample_goals(model, img, hm, count=1, seed=9)
    b = sample_goals(model, img, hm, count=1, seed=9)
    assert np.array_equal(a[0].destination, b[0].destination)
    five = sample_goals(model, img, hm, count=5, seed=9)
    ten = sample_goals(model, img, hm, count=10, seed=9)
    for i in range(5):
        assert np.array_equal(five[i].z_used, ten[i].z_used)
        assert np.array_equal(five[i].destination, ten[i].destination)


def test_sample_goals_inside_image_and_cached():
    cfg = _cfg()
    torch.manual_seed(2)
    model = GoalNet(cfg).eval()
    img, hm = _inputs(cfg, batch=1)
    samples = sample_goals(model, img, hm, count=30, seed=5)
    h, w = cfg.image_size
    for s in samples:
        u, v = s.destination
        assert 0 <= u <= w - 1 and 0 <= v <= h - 1
        # The cached destination is the expectation of exactly the stored grid.
        assert np.array_equal(s.destination, heatmap_expectation(s.heatmap))
        assert s.heatmap.grid.min() >= 0
        assert s.heatmap.grid.sum() == pytest.approx(1.0, abs=1e-5)


def test_sample_goals_rejects_zero_count():
    cfg = _cfg()
    model = GoalNet(cfg).eval()
    img, hm = _inputs(cfg, batch=1)
    with pytest.raises(ValueError):
        sample_goals(model, img, hm, count=0, seed=1)


# ── multimodality (two-corridor toy problem) ─────────────────────────────

class _FakeSample:
    def __init__(self, image, poses2d, dest):
        self.image = image
        self.poses2d = poses2d
        self.destination2d = dest


def test_two_mode_destinations_covered_by_prior_samples():
    """Same context, two destinations; prior samples must cover both modes."""

    class _Track:
        def __init__(self, values):
            self.values = values

    cfg = GoalNetConfig(n_history=2, joint_count=3, image_size=(16, 24),
                        channel_scale=0.25, destination_posterior=True,
                        learning_rate=2e-3, epochs=300, batch_size=32,
                        heatmap_sigma=1.0)
    rng = np.random.default_rng(0)
    base_hist = np.tile(np.array([12.0, 8.0]), (2, 3, 1))
    mode_a = np.array([4.0, 8.0], dtype=np.float32)
    mode_b = np.array([20.0, 8.0], dtype=np.float32)
    samples = []
    for i in range(16):
        # Each jittered context appears once per destination, so the context
        # alone cannot disambiguate and the latent must carry the mode. The
        # jitter itself keeps batch-norm statistics healthy (bitwise-identical
        # batches have zero variance).
        image = rng.integers(118, 138, size=(16, 24, 3)).astype(np.uint8)
        hist = base_hist + rng.uniform(-1.0, 1.0, size=base_hist.shape)
        samples.append(_FakeSample(image, _Track(hist), mode_a))
        samples.append(_FakeSample(image, _Track(hist), mode_b))

    result = train_goalnet(samples, cfg, seed=0)
    model = result["model"].eval()

    from scenemotion.goalnet import prepare_goal_inputs
    img_t, hm_t, _, _ = prepare_goal_inputs(samples[0], cfg)
    drawn = sample_goals(model, img_t, hm_t, count=30, seed=123)
    dests = np.stack([s.destination for s in drawn])
    d_a = np.linalg.norm(dests - mode_a, axis=1).min()
    d_b = np.linalg.norm(dests - mode_b, axis=1).min()
    assert d_a < 3.0, f"mode A missed, nearest {d_a:.2f}px"
    assert d_b < 3.0, f"mode B missed, nearest {d_b:.2f}px"


# ── data prep ────────────────────────────────────────────────────────────

def test_history_heatmap_channels_layout():
    hist = np.zeros((2, 3, 2))
    hist[1, 2] = [8.0, 4.0]  # frame 1, joint 2 at grid node (2, 1) for stride 4
    out = history_heatmap_channels(hist, sigma=1.0, grid_shape=(4, 6), stride=4.0)
    assert out.shape == (6, 4, 6)
    r, c = np.unravel_index(np.argmax(out[5]), out[5].shape)
    assert (r, c) == (1, 2)
