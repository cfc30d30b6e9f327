import numpy as np
import pytest
import torch

from datasets.stage_world.env import object_bounding_box
from labeling.segments import ModelScorer, Segment, full_segment
from models.vlp.frames import sample_frame_indices, sample_frames
from models.vlp.fusion import get_fusion
from models.vlp.inspection import attention_mass_ratio, frame_order_sensitivity, patch_box_mask
from models.vlp.vlp import load_model, save_model, score_videos
from util.errors import DatasetIntegrityError


def _inputs(corpus, task_id: str = "press-red", n: int = 2):
    refs = corpus.refs(task_id)[:n]
    videos = [sample_frames(corpus.frames(*r), 4) for r in refs]
    tokens = [corpus.instructions(task_id)[0].tokens] * n
    return videos, tokens


def test_frame_indices():
    assert sample_frame_indices(65, 4).tolist() == [0, 21, 43, 64]
    assert sample_frame_indices(3, 5).tolist() == [0, 0, 1, 2, 2]
    assert sample_frame_indices(10, 1).tolist() == [0]
    with pytest.raises(ValueError):
        sample_frame_indices(0, 4)


def test_forward_shape_and_determinism(corpus, tiny_model):
    videos, tokens = _inputs(corpus)
    frames = torch.as_tensor(np.stack(videos))
    t = torch.as_tensor(np.asarray(tokens))
    with torch.no_grad():
        scores = tiny_model(frames, t)
        again = tiny_model(frames, t)
    assert scores.shape == (2,)
    assert torch.equal(scores, again)


def test_batch_size_mismatch(corpus, tiny_model):
    videos, tokens = _inputs(corpus)
    with pytest.raises(ValueError):
        tiny_model(torch.as_tensor(np.stack(videos)), torch.as_tensor(np.asarray(tokens[:1])))


def test_checkpoint_round_trip(tmp_path, corpus, tiny_model):
    file_name = str(tmp_path / "model.ckpt")
    save_model(tiny_model, file_name, corpus.manifest.vocab_hash, epoch=3)
    loaded = load_model(file_name, corpus.manifest.vocab_hash)
    videos, tokens = _inputs(corpus)
    assert np.allclose(score_videos(tiny_model, videos, tokens), score_videos(loaded, videos, tokens), atol=1e-6)
    with pytest.raises(DatasetIntegrityError):
        load_model(file_name, "0" * 64)


def test_corrupted_checkpoint(tmp_path, corpus, tiny_model):
    file_name = str(tmp_path / "model.ckpt")
    save_model(tiny_model, file_name, None)
    with open(file_name, "r+b") as f:
        f.seek(-4, 2)
        f.write(b"\xff\xff\xff\xff")
    with pytest.raises(DatasetIntegrityError):
        load_model(file_name)


def test_model_scorer_uses_segment_frames(corpus, tiny_model):
    scorer = ModelScorer(tiny_model, corpus)
    instruction = corpus.instructions("press-red")[0]
    ref = corpus.refs("press-red")[0]
    whole = full_segment(corpus, ref)
    part = Segment(ref, 10, 20)
    scores = scorer.score([(whole, instruction), (part, instruction), (whole, instruction)])
    assert scores.dtype == np.float64
    assert scores[0] == scores[2]
    assert len(scorer.video(part)) == 4


def test_frame_order_sensitivity_range(corpus, tiny_model):
    videos, tokens = _inputs(corpus)
    value = frame_order_sensitivity(tiny_model, videos, tokens)
    assert 0. <= value <= 1.
    static = [np.repeat(v[:1], len(v), axis=0) for v in videos]
    assert frame_order_sensitivity(tiny_model, static, tokens) == 0.


def test_attention_maps_are_normalized(corpus, tiny_model):
    videos, tokens = _inputs(corpus, n=1)
    maps = tiny_model.attention_maps(torch.as_tensor(videos[0]), torch.as_tensor(tokens[0]))
    content = int(np.count_nonzero(tokens[0]))
    assert maps.shape == (content, 4, 4, 4)
    assert np.allclose(maps.sum(axis=(2, 3)), 1.)


def test_patch_box_mask():
    mask = patch_box_mask((0, 7, 0, 3), 32, 8)
    assert mask.shape == (4, 4)
    assert mask[0, 0] == 0.5
    assert mask.sum() == 0.5


def test_attention_mass_ratio():
    g = 4
    uniform = np.full((2, g, g), 1. / (g * g))
    boxes = [(0, 7, 0, 7), (8, 15, 8, 15)]
    assert attention_mass_ratio(uniform, boxes, 32, 8) == pytest.approx(1.)
    focused = np.zeros((2, g, g))
    focused[0, 0, 0] = 1.
    focused[1, 1, 1] = 1.
    assert attention_mass_ratio(focused, boxes, 32, 8) == pytest.approx(16.)
    with pytest.raises(ValueError):
        attention_mass_ratio(uniform, boxes[:1], 32, 8)


def test_object_box_is_inside_frame(corpus):
    traj = corpus.trajectory("press-red", "expert", 0)
    r0, r1, c0, c1 = object_bounding_box(traj.state(0))
    assert 0 <= r0 <= r1 < 32 and 0 <= c0 <= c1 < 32


def test_pad_tokens_do_not_change_score(corpus, tiny_model):
    videos, tokens = _inputs(corpus, n=1)
    frames = torch.as_tensor(np.stack(videos))
    padded = torch.as_tensor(np.asarray(tokens))
    content = int(np.count_nonzero(tokens[0]))
    assert content < padded.shape[1]
    with torch.no_grad():
        full = tiny_model(frames, padded)
        cut = tiny_model(frames, padded[:, :content])
        u, mask = tiny_model.encode_language(padded)
        u_cut, mask_cut = tiny_model.encode_language(padded[:, :content])
        z = tiny_model.encode_video(frames)
        w = tiny_model.cross_modal_fuse(z, u, mask)
        w_cut = tiny_model.cross_modal_fuse(z, u_cut, mask_cut)
    assert full.item() == pytest.approx(cut.item(), abs=1e-6)
    assert torch.allclose(w, w_cut, atol=1e-6)


@pytest.mark.gradient
def test_score_gradient_per_parameter(corpus, tiny_model):
    model = tiny_model.double()
    videos, tokens = _inputs(corpus)
    frames = torch.as_tensor(np.stack(videos), dtype=torch.float64)
    t = torch.as_tensor(np.asarray(tokens))

    def score():
        return model(frames, t).sum()

    model.zero_grad()
    score().backward()
    eps = 1e-5
    for name, p in model.named_parameters():
        index = int(torch.argmax(p.grad.abs()))
        analytic = p.grad.flatten()[index].item()
        flat = p.data.view(-1)
        original = flat[index].item()
        flat[index] = original + eps
        plus = score().item()
        flat[index] = original - eps
        minus = score().item()
        flat[index] = original
        numeric = (plus - minus) / (2 * eps)
        assert abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric)) + 1e-10, name


def test_fusion_concatenates():
    fusion = get_fusion("concatenate")
    assert fusion.output_dim(3, 5) == 8
    assert fusion.combine(torch.zeros(2, 3), torch.ones(2, 5)).shape == (2, 8)
    with pytest.raises(ValueError):
        get_fusion("sum")
