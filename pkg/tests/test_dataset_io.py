import os
import shutil

import numpy as np
import pytest

from datasets.stage_world.constants import container_magic, frames_extension, manifest_file, optimality_levels
from datasets.stage_world.env import render, rollout
from datasets.stage_world.io import frames_file, load_dataset, trajectory_file
from datasets.stage_world.preprocess_data import build_dataset
from util.errors import DatasetIntegrityError, MissingArtifactError
from util.preprocessing.data_loader import ContainerFormatError, read_container
from util.preprocessing.data_writer import FileWriter, write_container


def test_container_round_trip(tmp_path):
    file_name = str(tmp_path / "x.bin")
    arrays = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.ones((4,), dtype=np.float32)}
    write_container(file_name, container_magic, arrays, {"k": 1})
    for mmap_mode in (None, "r"):
        meta, loaded = read_container(file_name, container_magic, mmap_mode)
        assert meta == {"k": 1}
        assert list(loaded) == ["a", "b"]
        assert np.array_equal(loaded["a"], arrays["a"])


def test_container_rejects_truncation_and_bad_magic(tmp_path):
    file_name = str(tmp_path / "x.bin")
    write_container(file_name, container_magic, {"a": np.zeros(16, dtype=np.float32)})
    with pytest.raises(ContainerFormatError):
        read_container(file_name, b"XXXXXXXX")
    with open(file_name, "r+b") as f:
        f.truncate(os.path.getsize(file_name) - 4)
    with pytest.raises(ContainerFormatError):
        read_container(file_name, container_magic)


def test_container_rejects_non_finite(tmp_path):
    with pytest.raises(ValueError):
        write_container(str(tmp_path / "x.bin"), container_magic, {"a": np.array([np.inf], dtype=np.float32)})


def test_counts_and_split(corpus, registry):
    assert corpus.num_trajectories == len(registry) * 3 * 3
    assert {t.task_id for t in corpus.train_tasks}.isdisjoint(t.task_id for t in corpus.test_tasks)
    for task in corpus.tasks:
        for level in optimality_levels:
            assert corpus.count(task.task_id, level) == 3
        assert len(corpus.instructions(task.task_id)) == 4


def test_stored_trajectories_match_rollouts(corpus):
    task = corpus.task("press-red")
    traj = corpus.trajectory("press-red", "expert", 1)
    fresh = rollout(task, "expert", traj.seed)
    assert np.allclose(traj.states, fresh.states.astype(np.float32))
    assert np.allclose(corpus.frames("press-red", "expert", 1), render(task, fresh))


def test_refs_fraction(corpus):
    assert len(corpus.refs("push-red")) == 9
    assert len(corpus.refs("push-red", fraction=0.5)) == 6
    assert len(corpus.refs("push-red", levels=["random"])) == 3


def test_manifest_reserializes_identically(corpus):
    assert corpus.serialize_manifest() == corpus.manifest_bytes


def test_rebuild_is_byte_identical(tmp_path, registry):
    paths = [str(tmp_path / "a"), str(tmp_path / "b")]
    for path in paths:
        build_dataset(path, registry[:2], trajs_per_level=2, instr_per_task=2, seed=5, show_progress=False)
    manifests = []
    for path in paths:
        with open(os.path.join(path, manifest_file), "rb") as f:
            manifests.append(f.read())
    assert manifests[0] == manifests[1]


def test_build_validates_arguments(tmp_path, registry):
    with pytest.raises(ValueError):
        build_dataset(str(tmp_path), registry, trajs_per_level=1, instr_per_task=2, seed=0, show_progress=False)
    with pytest.raises(ValueError):
        build_dataset(str(tmp_path), registry, trajs_per_level=2, instr_per_task=0, seed=0, show_progress=False)


@pytest.fixture
def corpus_copy(tmp_path, corpus_path):
    path = str(tmp_path / "copy")
    shutil.copytree(corpus_path, path)
    return path


def test_missing_manifest(corpus_copy):
    os.remove(os.path.join(corpus_copy, manifest_file))
    with pytest.raises(MissingArtifactError):
        load_dataset(corpus_copy)


def test_corrupted_frames_are_named(corpus_copy):
    rel_path = frames_file("press-red", "medium", 0)
    with open(os.path.join(corpus_copy, rel_path), "r+b") as f:
        f.seek(-8, os.SEEK_END)
        f.write(b"\x00\x01\x02\x03\x04\x05\x06\x07")
    with pytest.raises(DatasetIntegrityError) as e:
        load_dataset(corpus_copy)
    assert e.value.file_name == rel_path


def test_missing_trajectory_is_named(corpus_copy):
    rel_path = trajectory_file("push-red", "random", 2)
    os.remove(os.path.join(corpus_copy, rel_path))
    with pytest.raises(DatasetIntegrityError) as e:
        load_dataset(corpus_copy, verify_checksums=False)
    assert e.value.file_name == rel_path


def test_extra_file_breaks_counts(corpus_copy):
    level_dir = os.path.join(corpus_copy, os.path.dirname(frames_file("push-red", "expert", 0)))
    shutil.copy(os.path.join(level_dir, "0000" + frames_extension), os.path.join(level_dir, "0099" + frames_extension))
    with pytest.raises(DatasetIntegrityError):
        load_dataset(corpus_copy, verify_checksums=False)


def test_explicit_sample_index_zero():
    class IndexWriter(FileWriter):
        def __init__(self):
            super().__init__("")
            self.indices = []

        def start_collect(self):
            pass

        def end_collect(self):
            pass

        def _collect_next(self, sequence, sample_index: int):
            self.indices.append(sample_index)

    with IndexWriter() as writer:
        writer.collect_next("a")
        writer.collect_next("b")
        writer.collect_next("c", sample_index=0)
    assert writer.indices == [0, 1, 0]
