import numpy as np
import pytest

from arabocr import checkpoint as ckpt_io
from arabocr import ctc
from arabocr.model import CRNN, ConfigError, ConfigMismatchError, NetworkConfig, default_config, preprocess
from arabocr.nn import LayerSpec as L
from arabocr.nn import grad_check
from arabocr.trainer import Adadelta

from oracles import vgg_feature_shape

LETTERS = list("ابدسعلمو")


def toy_config(channels=4, hidden=3, alphabet="ab", batchnorm=True):
    conv = [L.conv(channels), L.act("relu"), L.maxpool(2, 2), L.conv(channels)]
    if batchnorm:
        conv.append(L.batchnorm())
    conv += [L.act("relu"), L.maxpool((2, 1), (2, 1)), L.conv(channels, kernel=2, padding=0), L.act("relu")]
    return NetworkConfig(conv, (hidden,), tuple(alphabet), 8, 20)


def test_default_sequence_lengths():
    scene = default_config("scene", LETTERS)
    assert scene.feature_shape() == (512, 1, 24)
    video = default_config("video", LETTERS)
    assert video.sequence_length() == 125
    assert scene.num_classes == len(LETTERS) + 1


@pytest.mark.parametrize("width", [20, 100, 504])
def test_sequence_length_matches_shape_oracle(width):
    cfg = default_config("scene", LETTERS)
    assert cfg.feature_shape(width)[1:] == vgg_feature_shape(32, width)


def test_logit_frames_match_oracle():
    cfg = default_config("scene", LETTERS, channel_divisor=16, hidden=4, layers=1)
    logits, _ = CRNN(cfg).forward(np.zeros((2, 1, 32, 100)))
    assert logits.shape == (vgg_feature_shape(32, 100)[1], 2, len(LETTERS) + 1)


def test_height_must_collapse_to_one():
    with pytest.raises(ConfigError):
        NetworkConfig([L.conv(4), L.maxpool(2, 2)], (4,), ("a",), 8, 20)
    with pytest.raises(ConfigError):
        default_config("scene", [])
    with pytest.raises(ConfigError):
        default_config("poster", LETTERS)


def test_config_dict_round_trip():
    cfg = default_config("video", LETTERS, channel_divisor=8, hidden=48, layers=1)
    assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


def test_preprocess_examples():
    img = np.random.default_rng(0).integers(0, 256, (32, 100)).astype(np.uint8)
    out = preprocess(img, 32, 100)
    assert out.shape == (1, 32, 100)
    np.testing.assert_array_equal(out[0], img[:, ::-1] / 127.5 - 1.0)
    twice = preprocess(((out[0] + 1) * 127.5), 32, 100)[0]
    np.testing.assert_allclose((twice + 1) * 127.5, img, atol=1e-9)
    flat = preprocess(np.full((20, 37), 128, np.uint8), 32, 100)
    np.testing.assert_allclose(flat, 128 / 127.5 - 1, atol=1e-12)
    assert flat[0, 0, 0] == pytest.approx(0.00392, abs=1e-5)
    with pytest.raises(ValueError):
        preprocess(np.zeros((0, 5)), 32, 100)


def test_identical_items_give_identical_logits():
    cfg = default_config("scene", LETTERS, channel_divisor=16, hidden=6, layers=2)
    x = np.random.default_rng(1).standard_normal((1, 1, 32, 100))
    logits, _ = CRNN(cfg, seed=3).forward(np.concatenate([x, x]))
    np.testing.assert_array_equal(logits[:, 0], logits[:, 1])


def test_input_dimension_mismatch():
    model = CRNN(toy_config())
    with pytest.raises(ConfigMismatchError):
        model.forward(np.zeros((2, 1, 8, 21)))


@pytest.mark.parametrize("train", [True, False])
@pytest.mark.parametrize("seed", range(3))
def test_end_to_end_gradient_through_ctc(seed, train):
    model = CRNN(toy_config(), seed=seed)
    rng = np.random.default_rng(seed)
    if not train:
        for st in model.bn_states.values():
            st.running_mean[...] = rng.standard_normal(st.running_mean.shape) * 0.1
            st.running_var[...] = rng.uniform(0.5, 2.0, st.running_var.shape)
    x = rng.standard_normal((2, 1, 8, 20))
    targets = [[1, 2], [2, 2, 1]]
    saved = {k: (st.running_mean.copy(), st.running_var.copy()) for k, st in model.bn_states.items()}

    def loss():
        for k, (m, v) in saved.items():
            model.bn_states[k].running_mean[...] = m
            model.bn_states[k].running_var[...] = v
        logits, _ = model.forward(x, train=train)
        return sum(ctc.ctc_loss(logits[:, n], t)[0] for n, t in enumerate(targets))

    model.zero_grad()
    loss_value = sum(model.loss_and_grad(x, targets, train=train))
    assert loss_value == pytest.approx(loss(), abs=1e-12)
    inputs = {k: p.value for k, p in model.params.items()}
    analytic = {k: p.grad.copy() for k, p in model.params.items()}
    report = grad_check(loss, inputs, analytic)
    assert report.max_rel_error < 1e-3, report.per_input


def test_overfits_a_single_batch():
    cfg = toy_config(channels=16, hidden=32)
    x = np.random.default_rng(0).standard_normal((4, 1, 8, 20))
    targets = [[1, 2], [2], [1, 1], [2, 1, 2]]
    model = CRNN(cfg, seed=0)
    opt = Adadelta(model.params)
    history = []
    for _ in range(50):
        model.zero_grad()
        history.append(float(np.mean(model.loss_and_grad(x, targets))))
        opt.step()
    model.zero_grad()
    final = float(np.mean(model.loss_and_grad(x, targets)))
    assert final < 0.1
    assert final < history[0]
    assert model.transcribe(x) == ["ab", "b", "aa", "bab"]


def _trained_like_model(seed=0):
    model = CRNN(default_config("scene", LETTERS, channel_divisor=16, hidden=6, layers=2), seed=seed, dtype=np.float32)
    rng = np.random.default_rng(seed)
    for st in model.bn_states.values():
        st.running_mean[...] = rng.standard_normal(st.running_mean.shape)
        st.running_var[...] = rng.uniform(0.5, 2, st.running_var.shape)
    return model


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    model = _trained_like_model()
    ck = ckpt_io.from_model(model, {"epoch": 3, "loss": 1.25})
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    ckpt_io.save(ck, a)
    loaded = ckpt_io.load(a)
    ckpt_io.save(loaded, b)
    assert a.read_bytes() == b.read_bytes()
    assert loaded.config == model.config and loaded.metadata == {"epoch": 3, "loss": 1.25}
    assert list(loaded.tensors) == list(model.state_arrays())
    for name, arr in model.state_arrays().items():
        assert loaded.tensors[name].tobytes() == arr.astype("<f4").tobytes()
    restored = ckpt_io.to_model(loaded)
    x = np.random.default_rng(1).standard_normal((3, 1, 32, 100)).astype(np.float32)
    np.testing.assert_array_equal(restored.forward(x)[0], model.forward(x)[0])


def test_checkpoint_header_layout(tmp_path):
    data = ckpt_io.dumps(ckpt_io.from_model(_trained_like_model()))
    assert data[:4] == b"ATRC" and int.from_bytes(data[4:8], "little") == 1


def test_truncated_checkpoint():
    data = ckpt_io.dumps(ckpt_io.from_model(_trained_like_model()))
    for cut in (2, 10, len(data) // 2, len(data) - 1):
        with pytest.raises(ckpt_io.TruncatedCheckpointError):
            ckpt_io.loads(data[:cut])


def test_corrupt_and_version_errors_are_distinct():
    data = ckpt_io.dumps(ckpt_io.from_model(_trained_like_model()))
    with pytest.raises(ckpt_io.CorruptCheckpointError):
        ckpt_io.loads(b"XXXX" + data[4:])
    with pytest.raises(ckpt_io.UnsupportedVersionError):
        ckpt_io.loads(data[:4] + (2).to_bytes(4, "little") + data[8:])
    with pytest.raises(ckpt_io.CorruptCheckpointError):
        ckpt_io.loads(data + b"\0")
    bad_json = bytearray(data)
    bad_json[12] = ord("!")
    with pytest.raises(ckpt_io.CorruptCheckpointError):
        ckpt_io.loads(bytes(bad_json))
    for a, b in [
        (ckpt_io.TruncatedCheckpointError, ckpt_io.CorruptCheckpointError),
        (ckpt_io.UnsupportedVersionError, ckpt_io.CorruptCheckpointError),
    ]:
        assert not issubclass(a, b) and not issubclass(b, a)


def test_scene_checkpoint_rejects_video_width():
    model = ckpt_io.to_model(ckpt_io.loads(ckpt_io.dumps(ckpt_io.from_model(_trained_like_model()))))
    with pytest.raises(ConfigMismatchError):
        model.forward(np.zeros((1, 1, 32, 504), np.float32))


def test_every_parameter_named_once():
    model = CRNN(default_config("scene", LETTERS, channel_divisor=16, hidden=6, layers=2))
    names = list(model.state_arrays())
    assert len(names) == len(set(names))
    ids = [id(p) for p in model.params.values()]
    assert len(ids) == len(set(ids))
