"""Path planner contracts: table shapes, loss oracles, back-projection
consistency, mode switching, depth-from-size algebra, and a single-sequence
overfit sanity run."""

import numpy as np
import pytest
import torch

from scenemotion.geometry import DEPTH_SCALE, CameraModel
from scenemotion.pathnet import (
    MIN_DEPTH_M,
    PathNet,
    PathNetConfig,
    PathNetInput,
    aux_vector,
    build_path_input,
    initial_depth_estimate,
    path_loss,
    pathnet_from_checkpoint,
    pose_bounding_boxes,
    predict_path,
    prepare_path_sample,
    regress_xyz_ablation,
    train_pathnet,
)


def _small_config(**overrides):
    base = dict(n_history=3, n_future=5, joint_count=4, torso_joint=0,
                image_size=(32, 48), channel_scale=0.25, stacks=2,
                input_sigma=4.0)
    base.update(overrides)
    return PathNetConfig(**base)


def _camera(cfg):
    h, w = cfg.image_size
    return CameraModel(fx=40.0, fy=40.0, cx=w / 2.0, cy=h / 2.0,
                       width=w, height=h)


def _random_input(cfg, seed=0, with_goal=True):
    rng = np.random.default_rng(seed)
    h, w = cfg.image_size
    image = rng.integers(0, 255, size=(h, w, 3)).astype(np.uint8)
    torso = np.stack([np.linspace(10.0, 20.0, cfg.n_history),
                      np.full(cfg.n_history, h / 2.0)], axis=1)
    offsets = rng.uniform(-3.0, 3.0, size=(cfg.joint_count, 2))
    offsets[cfg.torso_joint] = 0.0
    offsets[:, 1] += np.linspace(-4.0, 4.0, cfg.joint_count)  # nonzero bbox
    history = torso[:, None, :] + offsets[None, :, :]
    goal = np.array([w - 8.0, h / 2.0]) if with_goal else None
    return build_path_input(image, history, _camera(cfg), cfg,
                            goal_destination=goal)


# ── architecture shapes ──────────────────────────────────────────────────

def test_row_shapes_at_reduced_scale():
    # Base channels 128/256/384/512 scale to 16/32/48/64 at 0.125; a
    # 64x112 image keeps every spatial size of the full-resolution table
    # divided by 4.
    cfg = PathNetConfig(n_history=4, n_future=6, joint_count=5,
                        torso_joint=2, image_size=(64, 112),
                        channel_scale=0.125, stacks=3)
    model = PathNet(cfg).eval()
    b, (h, w) = 2, cfg.image_size
    nj = cfg.n_history * cfg.joint_count
    image = torch.rand(b, 3, h, w)
    hms = torch.rand(b, nj, h, w)
    goal = torch.rand(b, 1, h, w)
    aux = torch.rand(b, cfg.n_history + nj * 2)
    collect = {}
    with torch.no_grad():
        outs = model(image, hms, goal, aux, collect=collect)
    assert len(outs) == 3
    assert collect["1"].shape == (b, 3 + nj + 1, 64, 112)
    assert collect["6"].shape == (b, 16, 32, 56)
    assert collect["7"].shape == (b, 32, 16, 28)
    assert collect["11"].shape == (b, 32, 16, 28)
    assert collect["12"].shape == (b, cfg.n_future, 16, 28)
    assert collect["13"].shape == (b, 48, 8, 14)
    assert collect["14"].shape == (b, 64, 4, 7)
    assert collect["15"].shape == (b, 64)
    assert collect["16"].shape == (b, 32)
    assert collect["17"].shape == (b, 32)
    assert collect["18"].shape == (b, cfg.n_history + cfg.n_future)
    for out in outs:
        assert out["heatmaps"].shape == (b, cfg.n_future, 16, 28)
        assert out["depths"].shape == (b, cfg.n_history + cfg.n_future)


def test_config_rejects_bad_dims():
    with pytest.raises(ValueError):
        PathNetConfig(image_size=(32, 56))  # 56/4 = 14, not divisible by 4
    with pytest.raises(ValueError):
        PathNetConfig(torso_joint=21)
    with pytest.raises(ValueError):
        PathNetConfig(goal_dropout=1.0)


def test_depth_head_bias_starts_at_four_meters():
    model = PathNet(_small_config())
    # bias 1 in normalized units is DEPTH_SCALE meters
    assert torch.all(model.depth_head18.bias == 1.0)
    assert DEPTH_SCALE == 4.0


# ── prediction contract ──────────────────────────────────────────────────

def test_predict_path_back_projection_consistency():
    cfg = _small_config()
    torch.manual_seed(3)
    model = PathNet(cfg)
    inp = _random_input(cfg)
    pred = predict_path(model, inp)
    n, t = cfg.n_history, cfg.n_future
    gh, gw = cfg.grid_size
    assert pred.heatmaps.shape == (t, gh, gw)
    assert pred.coords2d.shape == (t, 2)
    assert pred.depths.shape == (n + t,)
    assert pred.path3d.shape == (n + t, 3)
    assert np.all(pred.depths >= MIN_DEPTH_M)
    # each probability grid sums to one
    np.testing.assert_allclose(pred.heatmaps.sum(axis=(1, 2)),
                               np.ones(t), atol=1e-5)
    # 3D path is exactly the back-projection of (history coords, coords2d)
    path2d = np.concatenate(
        [inp.history_coords[:, cfg.torso_joint].numpy(), pred.coords2d])
    expect = inp.camera.back_project(path2d, pred.depths)
    np.testing.assert_array_equal(pred.path3d, expect)
    # depth dimension of the back-projection is the predicted depth itself
    np.testing.assert_array_equal(pred.path3d[:, 2], pred.depths)


def test_predict_path_is_deterministic_in_eval():
    cfg = _small_config()
    torch.manual_seed(4)
    model = PathNet(cfg)
    inp = _random_input(cfg)
    a = predict_path(model, inp)
    b = predict_path(model, inp)
    np.testing.assert_array_equal(a.coords2d, b.coords2d)
    np.testing.assert_array_equal(a.depths, b.depths)


def test_deterministic_mode_zeroes_the_goal_channel():
    cfg = _small_config()
    torch.manual_seed(5)
    model = PathNet(cfg)
    inp = _random_input(cfg, with_goal=True)
    with_goal = predict_path(model, inp, mode="goal-conditioned")
    without = predict_path(model, inp, mode="deterministic")
    # outputs must differ when the goal channel carries signal
    assert np.abs(with_goal.coords2d - without.coords2d).max() > 0
    # and deterministic mode equals an explicitly zeroed goal channel
    zeroed = PathNetInput(image=inp.image,
                          history_heatmaps=inp.history_heatmaps,
                          goal_heatmap=torch.zeros_like(inp.goal_heatmap),
                          initial_depths=inp.initial_depths,
                          history_coords=inp.history_coords,
                          camera=inp.camera)
    explicit = predict_path(model, zeroed, mode="goal-conditioned")
    np.testing.assert_array_equal(without.coords2d, explicit.coords2d)
    np.testing.assert_array_equal(without.depths, explicit.depths)


def test_predict_path_validates_input():
    cfg = _small_config()
    model = PathNet(cfg)
    inp = _random_input(cfg)
    with pytest.raises(ValueError):
        predict_path(model, inp, mode="sideways")
    bad = PathNetInput(image=inp.image,
                       history_heatmaps=inp.history_heatmaps[:-1],
                       goal_heatmap=inp.goal_heatmap,
                       initial_depths=inp.initial_depths,
                       history_coords=inp.history_coords,
                       camera=inp.camera)
    with pytest.raises(ValueError):
        predict_path(model, bad)
    neg = PathNetInput(image=inp.image,
                       history_heatmaps=inp.history_heatmaps,
                       goal_heatmap=inp.goal_heatmap,
                       initial_depths=-inp.initial_depths,
                       history_coords=inp.history_coords,
                       camera=inp.camera)
    with pytest.raises(ValueError):
        predict_path(model, neg)


# ── losses ───────────────────────────────────────────────────────────────

def test_path_loss_matches_naive_loops():
    rng = np.random.default_rng(7)
    b, t, f = 3, 4, 9
    coords = rng.normal(size=(b, t, 2))
    gt2 = rng.normal(size=(b, t, 2))
    path = rng.normal(size=(b, f, 3))
    gt3 = rng.normal(size=(b, f, 3))
    l2d, l3d = path_loss((torch.from_numpy(coords), torch.from_numpy(path)),
                         gt2, gt3)

    want2 = 0.0
    for i in range(b):
        for j in range(t):
            want2 += abs(gt2[i, j] - coords[i, j]).sum()
    want2 /= b * t
    want3 = 0.0
    for i in range(b):
        for j in range(f):
            want3 += abs(gt3[i, j] - path[i, j]).sum()
    want3 /= b * f
    smooth = 0.0
    for i in range(b):
        for j in range(f - 1):
            smooth += abs(path[i, j + 1] - path[i, j]).sum()
    smooth /= b * (f - 1)
    assert abs(float(l2d) - want2) < 1e-6
    assert abs(float(l3d) - (want3 + smooth)) < 1e-6


def test_path_loss_zero_for_exact_constant_path():
    path = np.tile(np.array([1.0, -2.0, 3.0]), (6, 1))
    coords = np.tile(np.array([4.0, 5.0]), (4, 1))
    l2d, l3d = path_loss((torch.from_numpy(coords), torch.from_numpy(path)),
                         coords, path)
    assert float(l2d) == 0.0
    assert float(l3d) == 0.0


def test_smoothness_positive_for_any_nonconstant_path():
    # with pred == gt the 3D error term vanishes, leaving pure smoothness
    rng = np.random.default_rng(11)
    for _ in range(20):
        path = np.cumsum(rng.normal(size=(5, 3)), axis=0)
        _, l3d = path_loss((None, torch.from_numpy(path)), None, path)
        if np.ptp(path, axis=0).max() > 0:
            assert float(l3d) > 0.0
    const = np.tile(rng.normal(size=3), (5, 1))
    _, l3d = path_loss((None, torch.from_numpy(const)), None, const)
    assert float(l3d) == 0.0


def test_path_loss_accepts_prediction_artifact():
    cfg = _small_config()
    torch.manual_seed(6)
    model = PathNet(cfg)
    inp = _random_input(cfg)
    pred = predict_path(model, inp)
    gt2 = pred.coords2d.copy()
    gt3 = pred.path3d.copy()
    l2d, l3d = path_loss(pred, gt2, gt3)
    assert float(l2d) == 0.0
    assert float(l3d) > 0.0  # smoothness of a nonconstant predicted path


# ── depth from apparent size ─────────────────────────────────────────────

def test_initial_depth_estimate_algebra():
    fy = 50.0
    boxes = np.array([[0.0, 10.0, 5.0, 10.0 + fy]])  # height exactly fy px
    d = initial_depth_estimate(boxes, fy, person_height_m=1.7)
    assert abs(d[0] - 1.7) < 1e-12
    half = np.array([[0.0, 10.0, 5.0, 10.0 + fy / 2.0]])
    d2 = initial_depth_estimate(half, fy, person_height_m=1.7)
    assert abs(d2[0] - 3.4) < 1e-12


def test_initial_depth_estimate_rejects_degenerate_box():
    with pytest.raises(ValueError):
        initial_depth_estimate(np.array([[0.0, 5.0, 3.0, 5.0]]), 40.0)
    with pytest.raises(ValueError):
        initial_depth_estimate(np.zeros((2, 3)), 40.0)


def test_pose_bounding_boxes():
    poses = np.zeros((2, 3, 2))
    poses[0] = [[1.0, 2.0], [5.0, 9.0], [3.0, 4.0]]
    poses[1] = [[0.0, 0.0], [2.0, 1.0], [1.0, 6.0]]
    boxes = pose_bounding_boxes(poses)
    np.testing.assert_array_equal(boxes[0], [1.0, 2.0, 5.0, 9.0])
    np.testing.assert_array_equal(boxes[1], [0.0, 0.0, 2.0, 6.0])


def test_build_path_input_depths_follow_bbox_height():
    cfg = _small_config()
    inp = _random_input(cfg, seed=2)
    boxes = pose_bounding_boxes(inp.history_coords.numpy().astype(np.float64))
    want = initial_depth_estimate(boxes, _camera(cfg).fy,
                                  cfg.person_height_m)
    np.testing.assert_allclose(inp.initial_depths.numpy(), want, rtol=1e-6)
    no_goal = _random_input(cfg, seed=2, with_goal=False)
    assert torch.all(no_goal.goal_heatmap == 0)
    assert float(inp.goal_heatmap.max()) > 0.9  # peak of the goal bump


# ── xyz regression variant ───────────────────────────────────────────────

def test_xyz_head_contract_and_gradients():
    cfg = _small_config(regress_xyz=True)
    torch.manual_seed(8)
    model = PathNet(cfg)
    inp = _random_input(cfg)
    path = regress_xyz_ablation(model, inp)
    assert path.shape == (cfg.total_frames, 3)

    # gradient from the xyz loss reaches the stem and the first stack
    model.train()
    aux = aux_vector(cfg, inp.initial_depths, inp.history_coords)
    outs = model(inp.image[None], inp.history_heatmaps[None],
                 inp.goal_heatmap[None], aux[None])
    gt3 = torch.zeros(1, cfg.total_frames, 3)
    total = 0.0
    for out in outs:
        _, l3d = path_loss((None, out["xyz"] * DEPTH_SCALE), None, gt3)
        total = total + l3d
    total.backward()
    assert model.conv6.conv.weight.grad.abs().max() > 0
    assert model.stacks[0].b2.conv1.weight.grad.abs().max() > 0


def test_xyz_ablation_requires_the_head():
    cfg = _small_config(regress_xyz=False)
    model = PathNet(cfg)
    inp = _random_input(cfg)
    with pytest.raises(ValueError):
        regress_xyz_ablation(model, inp)


def test_gradient_reaches_first_stack_through_all_heads():
    cfg = _small_config()
    torch.manual_seed(9)
    model = PathNet(cfg).train()
    inp = _random_input(cfg)
    aux = aux_vector(cfg, inp.initial_depths, inp.history_coords)
    outs = model(inp.image[None], inp.history_heatmaps[None],
                 inp.goal_heatmap[None], aux[None])
    total = 0.0
    for out in outs:
        total = total + out["heatmaps"].abs().mean() + out["depths"].abs().mean()
    total.backward()
    assert model.conv6.conv.weight.grad.abs().max() > 0
    assert model.stacks[0].b2.conv1.weight.grad.abs().max() > 0
    assert model.lin16.linear.weight.grad.abs().max() > 0


# ── training ─────────────────────────────────────────────────────────────

class _Track:
    def __init__(self, values):
        self.values = values


class _FakeSample:
    def __init__(self, image, poses2d, poses3d, camera, dest):
        self.image = image
        self.poses2d = _Track(poses2d)
        self.poses3d = _Track(poses3d)
        self.camera = camera
        self.destination2d = dest


def _synthetic_sequence(cfg, seed=0):
    """Geometrically consistent walking sequence for the small config."""
    rng = np.random.default_rng(seed)
    h, w = cfg.image_size
    cam = _camera(cfg)
    f = cfg.total_frames
    torso_u = np.linspace(12.0, w - 12.0, f)
    torso_v = np.full(f, h / 2.0)
    offsets = rng.uniform(-2.5, 2.5, size=(cfg.joint_count, 2))
    offsets[cfg.torso_joint] = 0.0
    offsets[:, 1] += np.linspace(-4.0, 4.0, cfg.joint_count)
    poses2d = (np.stack([torso_u, torso_v], axis=1)[:, None, :]
               + offsets[None, :, :])
    depths = np.linspace(2.0, 3.0, f)
    poses3d = np.stack([
        cam.back_project(poses2d[i], np.full(cfg.joint_count, depths[i]))
        for i in range(f)
    ])
    image = rng.integers(60, 200, size=(h, w, 3)).astype(np.uint8)
    dest = poses2d[-1, cfg.torso_joint]
    return _FakeSample(image, poses2d, poses3d, cam, dest)


def test_overfit_single_sequence_under_two_pixels():
    cfg = _small_config(stacks=2, learning_rate=2e-3, epochs=200,
                        batch_size=4, goal_dropout=0.0)
    sample = _synthetic_sequence(cfg, seed=1)
    result = train_pathnet([sample], cfg, seed=0)
    model = result["model"].eval()
    inp = build_path_input(sample.image,
                           sample.poses2d.values[:cfg.n_history],
                           sample.camera, cfg,
                           goal_destination=sample.destination2d)
    pred = predict_path(model, inp)
    gt2d = sample.poses2d.values[cfg.n_history:, cfg.torso_joint]
    err = np.linalg.norm(pred.coords2d - gt2d, axis=1).mean()
    assert err < 2.0, f"2D path error {err:.2f}px after overfitting"


def test_training_is_seed_deterministic():
    cfg = _small_config(stacks=1, epochs=2, batch_size=2)
    samples = [_synthetic_sequence(cfg, seed=s) for s in range(3)]
    r1 = train_pathnet(samples, cfg, seed=5)
    r2 = train_pathnet(samples, cfg, seed=5)
    assert r1["history"]["loss"] == r2["history"]["loss"]
    for p1, p2 in zip(r1["model"].parameters(), r2["model"].parameters()):
        assert torch.equal(p1, p2)


def test_checkpoint_round_trip(tmp_path):
    cfg = _small_config(stacks=1, epochs=1, batch_size=2)
    samples = [_synthetic_sequence(cfg, seed=s) for s in range(2)]
    path = str(tmp_path / "pathnet.pt")
    result = train_pathnet(samples, cfg, seed=3, checkpoint_path=path)
    reloaded = pathnet_from_checkpoint(path)
    assert reloaded.config == cfg
    inp = build_path_input(samples[0].image,
                           samples[0].poses2d.values[:cfg.n_history],
                           samples[0].camera, cfg,
                           goal_destination=samples[0].destination2d)
    a = predict_path(result["model"], inp)
    b = predict_path(reloaded, inp)
    np.testing.assert_array_equal(a.coords2d, b.coords2d)
    np.testing.assert_array_equal(a.depths, b.depths)


def test_prepare_path_sample_rejects_short_sequence():
    cfg = _small_config()
    sample = _synthetic_sequence(cfg)
    sample.poses2d.values = sample.poses2d.values[:-1]
    with pytest.raises(ValueError):
        prepare_path_sample(sample, cfg)
