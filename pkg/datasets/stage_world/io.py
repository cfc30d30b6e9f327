"""
On-disk layout of a StageWorld preference dataset and a lazy, read-only handle over it.

    <root>/manifest.json                          written last, the commit point of a build
    <root>/vocab.json
    <root>/tasks/<task_id>/instructions.json
    <root>/tasks/<task_id>/<level>/<index>.traj    states, actions, rewards
    <root>/tasks/<task_id>/<level>/<index>.frames  rendered video
"""
import hashlib
import json
import os
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from datasets.stage_world.constants import *
from datasets.stage_world.env import TaskSpec, Trajectory
from datasets.stage_world.instructions import Instruction, Vocabulary
from util.errors import DatasetIntegrityError, MissingArtifactError
from util.preprocessing.data_loader import ContainerFormatError, read_container


def task_dir(task_id: str) -> str:
    return "/".join((tasks_dir, task_id))


def trajectory_file(task_id: str, level: str, index: int) -> str:
    return "/".join((tasks_dir, task_id, level, f"{index:04d}{trajectory_extension}"))


def frames_file(task_id: str, level: str, index: int) -> str:
    return "/".join((tasks_dir, task_id, level, f"{index:04d}{frames_extension}"))


def instructions_path(task_id: str) -> str:
    return "/".join((tasks_dir, task_id, instructions_file))


def file_sha256(file_name: str) -> str:
    h = hashlib.sha256()
    with open(file_name, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode("utf-8")


class TrajectoryRef(NamedTuple):
    task_id: str
    level: str
    index: int

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "level": self.level, "index": self.index}

    @staticmethod
    def from_dict(d: dict) -> "TrajectoryRef":
        return TrajectoryRef(d["task_id"], d["level"], int(d["index"]))


class DatasetManifest:
    def __init__(self, registry: List[TaskSpec], registry_seed: int, seed: int, trajs_per_level: int,
                 instr_per_task: int, vocab_hash: str, files: Dict[str, str], levels=optimality_levels,
                 counts: Optional[Dict[str, Dict[str, int]]] = None,
                 instruction_counts: Optional[Dict[str, int]] = None, version: int = format_version):
        self.registry = list(registry)
        self.registry_seed = registry_seed
        self.seed = seed
        self.trajs_per_level = trajs_per_level
        self.instr_per_task = instr_per_task
        self.vocab_hash = vocab_hash
        self.files = dict(files)
        self.levels = tuple(levels)
        self.format_version = version
        self.counts = counts if counts is not None else {
            t.task_id: {level: trajs_per_level for level in self.levels} for t in self.registry
        }
        self.instruction_counts = instruction_counts if instruction_counts is not None else {
            t.task_id: instr_per_task for t in self.registry
        }

    @property
    def split(self) -> Dict[str, str]:
        return {t.task_id: t.split for t in self.registry}

    @property
    def num_trajectories(self) -> int:
        return sum(sum(c.values()) for c in self.counts.values())

    def to_json(self) -> bytes:
        return dump_json({
            "format_version": self.format_version,
            "registry_seed": self.registry_seed,
            "seed": self.seed,
            "trajs_per_level": self.trajs_per_level,
            "instr_per_task": self.instr_per_task,
            "levels": list(self.levels),
            "vocab_hash": self.vocab_hash,
            "split": self.split,
            "counts": self.counts,
            "instructions": self.instruction_counts,
            "registry": [t.to_dict() for t in self.registry],
            "files": self.files
        })

    @staticmethod
    def from_json(data: bytes, file_name: str = manifest_file) -> "DatasetManifest":
        try:
            d = json.loads(data.decode("utf-8"))
            version = int(d["format_version"])
        except (ValueError, KeyError, TypeError) as e:
            raise DatasetIntegrityError(file_name, f"malformed manifest ({e})")
        if version != format_version:
            raise DatasetIntegrityError(file_name, f"unsupported format_version {version}")
        registry = [TaskSpec.from_dict(t) for t in d["registry"]]
        manifest = DatasetManifest(registry, d["registry_seed"], d["seed"], d["trajs_per_level"], d["instr_per_task"],
                                   d["vocab_hash"], d["files"], d["levels"], d["counts"], d["instructions"], version)
        if manifest.split != d["split"]:
            raise DatasetIntegrityError(file_name, "split assignment does not match the registry")
        return manifest


class PreferenceCorpus:
    """
    Read-only handle over a built dataset. Trajectories and instructions are loaded on first access,
    frames are memory mapped unless `in_memory` is set.
    """

    def __init__(self, path: str, manifest: DatasetManifest, manifest_bytes: bytes, vocab: Vocabulary,
                 in_memory: bool = False):
        self.path = path
        self.manifest = manifest
        self.vocab = vocab
        self.in_memory = in_memory
        self._manifest_bytes = manifest_bytes
        self._tasks = {t.task_id: t for t in manifest.registry}
        self._trajectories = {}
        self._instructions = {}

    @property
    def tasks(self) -> List[TaskSpec]:
        return list(self.manifest.registry)

    @property
    def train_tasks(self) -> List[TaskSpec]:
        return [t for t in self.manifest.registry if t.split == "train"]

    @property
    def test_tasks(self) -> List[TaskSpec]:
        return [t for t in self.manifest.registry if t.split == "test"]

    @property
    def levels(self):
        return self.manifest.levels

    @property
    def num_trajectories(self) -> int:
        return self.manifest.num_trajectories

    def task(self, task_id: str) -> TaskSpec:
        if task_id not in self._tasks:
            raise KeyError(f"Unknown task '{task_id}'")
        return self._tasks[task_id]

    def count(self, task_id: str, level: str) -> int:
        return self.manifest.counts[task_id].get(level, 0)

    def refs(self, task_id: str, levels: Optional[List[str]] = None, fraction: float = 1.) -> List[TrajectoryRef]:
        """
        References to the trajectories of a task. With fraction < 1 only the first ceil(fraction * count)
        trajectories of each level are kept.
        """
        out = []
        for level in (self.levels if levels is None else levels):
            count = self.count(task_id, level)
            kept = min(count, int(np.ceil(fraction * count - 1e-9)))
            out.extend(TrajectoryRef(task_id, level, i) for i in range(kept))
        return out

    def _read(self, rel_path: str, mmap_mode: Optional[str] = None):
        file_name = os.path.join(self.path, rel_path)
        try:
            return read_container(file_name, container_magic, mmap_mode)
        except ContainerFormatError as e:
            raise DatasetIntegrityError(rel_path, str(e))

    def trajectory(self, task_id: str, level: str, index: int) -> Trajectory:
        key = (task_id, level, index)
        if key not in self._trajectories:
            meta, arrays = self._read(trajectory_file(task_id, level, index))
            self._trajectories[key] = Trajectory(task_id, level, arrays["states"].astype(np.float64),
                                                 arrays["actions"].astype(np.float64),
                                                 arrays["rewards"].astype(np.float64), seed=meta.get("seed"))
        return self._trajectories[key]

    def frames(self, task_id: str, level: str, index: int) -> np.ndarray:
        _, arrays = self._read(frames_file(task_id, level, index), None if self.in_memory else "r")
        return arrays["frames"]

    def instructions(self, task_id: str) -> List[Instruction]:
        if task_id not in self._instructions:
            rel_path = instructions_path(task_id)
            with open(os.path.join(self.path, rel_path), "rb") as f:
                records = json.loads(f.read().decode("utf-8"))["instructions"]
            instructions = []
            for r in records:
                tokens = self.vocab.encode(r["text"])
                if list(tokens) != list(r["tokens"]):
                    raise DatasetIntegrityError(rel_path, f"tokens of '{r['text']}' do not match the vocabulary")
                instructions.append(Instruction(r["text"], tokens, task_id, r["template_id"], r["style"]))
            self._instructions[task_id] = instructions
        return self._instructions[task_id]

    def serialize_manifest(self) -> bytes:
        return self.manifest.to_json()

    @property
    def manifest_bytes(self) -> bytes:
        return self._manifest_bytes


def _validate_counts(path: str, manifest: DatasetManifest):
    for task in manifest.registry:
        for level in manifest.levels:
            expected = manifest.counts[task.task_id].get(level, 0)
            level_dir = os.path.join(path, tasks_dir, task.task_id, level)
            for ext, name_fn in ((trajectory_extension, trajectory_file), (frames_extension, frames_file)):
                for index in range(expected):
                    rel_path = name_fn(task.task_id, level, index)
                    if not os.path.isfile(os.path.join(path, rel_path)):
                        raise DatasetIntegrityError(rel_path, "listed in the manifest but missing")
                found = [f.name for f in os.scandir(level_dir) if f.name.endswith(ext)] \
                    if os.path.isdir(level_dir) else []
                if len(found) != expected:
                    raise DatasetIntegrityError("/".join((tasks_dir, task.task_id, level)),
                                                f"expected {expected} '{ext}' files, found {len(found)}")


def load_dataset(path: str, verify_checksums: bool = True, in_memory: bool = False) -> PreferenceCorpus:
    """
    Open a built dataset.

    :param path: dataset root directory
    :param verify_checksums: recompute SHA-256 of every listed file
    :param in_memory: load frames into memory instead of mapping them
    :return: dataset handle
    """
    manifest_path = os.path.join(path, manifest_file)
    if not os.path.isfile(manifest_path):
        raise MissingArtifactError(f"No dataset manifest found at '{manifest_path}'")
    with open(manifest_path, "rb") as f:
        manifest_bytes = f.read()
    manifest = DatasetManifest.from_json(manifest_bytes)

    for rel_path in manifest.files:
        if not os.path.isfile(os.path.join(path, rel_path)):
            raise DatasetIntegrityError(rel_path, "listed in the manifest but missing")
    _validate_counts(path, manifest)

    if verify_checksums:
        for rel_path, checksum in sorted(manifest.files.items()):
            if file_sha256(os.path.join(path, rel_path)) != checksum:
                raise DatasetIntegrityError(rel_path, "checksum mismatch")

    with open(os.path.join(path, vocab_file), "rb") as f:
        vocab_bytes = f.read()
    if hashlib.sha256(vocab_bytes).hexdigest() != manifest.vocab_hash:
        raise DatasetIntegrityError(vocab_file, "vocabulary hash does not match the manifest")
    vocab = Vocabulary.from_json(vocab_bytes)

    return PreferenceCorpus(path, manifest, manifest_bytes, vocab, in_memory)
