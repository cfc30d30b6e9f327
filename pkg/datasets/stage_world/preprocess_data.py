import argparse
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Sequence

from tqdm import tqdm

from datasets.stage_world.constants import *
from datasets.stage_world.env import TaskSpec, make_registry, render, rollout
from datasets.stage_world.instructions import Vocabulary, gen_instructions
from datasets.stage_world.io import DatasetManifest, dump_json, file_sha256, frames_file, instructions_path, \
    trajectory_file
from util.preprocessing.data_writer import ContainerWriter, atomic_write


def get_configuration() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="StageWorld preference dataset generation.")
    parser.add_argument("-o", "--out_path", default="../preprocessed_data/StageWorld/", type=str,
                        help="Destination directory for the dataset.")
    parser.add_argument("--registry_seed", default=0, type=int, help="Seed of the task registry geometry.")
    parser.add_argument("--seed", default=0, type=int, help="Seed of the scripted rollouts and instructions.")
    parser.add_argument("--trajs_per_level", default=8, type=int, help="Trajectories per optimality level and task.")
    parser.add_argument("--instr_per_task", default=40, type=int, help="Instructions per task.")
    parser.add_argument("--num_workers", default=0, type=int, help="Worker processes (0 = build in this process).")
    return parser.parse_args()


def trajectory_seed(seed: int, index: int) -> int:
    return seed * 10000 + index


def build_task(out_path: str, task: TaskSpec, trajs_per_level: int, instr_per_task: int, seed: int,
               levels: Sequence[str] = optimality_levels) -> Dict[str, str]:
    """
    Roll out, render and write all trajectories and instructions of a single task.

    :return: {relative file path: sha256}
    """
    written = []
    for level in levels:
        os.makedirs(os.path.join(out_path, tasks_dir, task.task_id, level), exist_ok=True)
        for index in range(trajs_per_level):
            traj_seed = trajectory_seed(seed, index)
            traj = rollout(task, level, traj_seed)
            meta = {"task_id": task.task_id, "optimality": level, "index": index, "seed": traj_seed}

            rel_path = trajectory_file(task.task_id, level, index)
            with ContainerWriter(os.path.join(out_path, rel_path), container_magic,
                                 {**meta, "success": traj.success}) as writer:
                writer.collect_next(("states", traj.states))
                writer.collect_next(("actions", traj.actions))
                writer.collect_next(("rewards", traj.rewards))
            written.append(rel_path)

            rel_path = frames_file(task.task_id, level, index)
            with ContainerWriter(os.path.join(out_path, rel_path), container_magic, meta) as writer:
                writer.collect_next(("frames", render(task, traj)))
            written.append(rel_path)

    vocab = Vocabulary.from_grammar()
    instructions = gen_instructions(task, instr_per_task, seed, vocab)
    rel_path = instructions_path(task.task_id)
    atomic_write(os.path.join(out_path, rel_path), dump_json({
        "task_id": task.task_id,
        "instructions": [{**i.to_dict(), "tokens": list(i.tokens)} for i in instructions]
    }))
    written.append(rel_path)
    return {p: file_sha256(os.path.join(out_path, p)) for p in written}


def build_dataset(out_path: str, registry: Sequence[TaskSpec], trajs_per_level: int, instr_per_task: int, seed: int,
                  registry_seed: int = 0, num_workers: int = 0, show_progress: bool = True) -> DatasetManifest:
    """
    Build the dataset. Any previous build in `out_path` is invalidated first; the manifest is written last.

    :param out_path: dataset root
    :param registry: tasks to include
    :param trajs_per_level: trajectories per optimality level and task
    :param instr_per_task: instructions per task
    :param seed: rollout / instruction seed
    :param registry_seed: seed the registry was created with (recorded in the manifest)
    :param num_workers: worker processes for building tasks in parallel
    :param show_progress: show a progress bar
    :return: the written manifest
    """
    if trajs_per_level < 2:
        raise ValueError(f"trajs_per_level must be >= 2, got {trajs_per_level}")
    if instr_per_task < 1:
        raise ValueError(f"instr_per_task must be >= 1, got {instr_per_task}")
    task_ids = [t.task_id for t in registry]
    if len(set(task_ids)) != len(task_ids):
        raise ValueError("Task ids in the registry must be unique")

    os.makedirs(out_path, exist_ok=True)
    manifest_path = os.path.join(out_path, manifest_file)
    if os.path.exists(manifest_path):
        os.remove(manifest_path)
    shutil.rmtree(os.path.join(out_path, tasks_dir), ignore_errors=True)

    vocab = Vocabulary.from_grammar()
    atomic_write(os.path.join(out_path, vocab_file), vocab.to_json())
    files = {vocab_file: file_sha256(os.path.join(out_path, vocab_file))}

    progress = tqdm(total=len(registry), desc="Tasks", disable=not show_progress)
    if num_workers > 0:
        with ProcessPoolExecutor(num_workers) as pool:
            futures = [pool.submit(build_task, out_path, task, trajs_per_level, instr_per_task, seed)
                       for task in registry]
            for future in futures:
                files.update(future.result())
                progress.update()
    else:
        for task in registry:
            files.update(build_task(out_path, task, trajs_per_level, instr_per_task, seed))
            progress.update()
    progress.close()

    manifest = DatasetManifest(registry, registry_seed, seed, trajs_per_level, instr_per_task, vocab.sha256,
                               dict(sorted(files.items())))
    atomic_write(manifest_path, manifest.to_json())
    return manifest


if __name__ == "__main__":
    conf = get_configuration()
    m = build_dataset(conf.out_path, make_registry(conf.registry_seed), conf.trajs_per_level, conf.instr_per_task,
                      conf.seed, conf.registry_seed, conf.num_workers)
    print(f"Wrote {m.num_trajectories} trajectories of {len(m.registry)} tasks to {conf.out_path}")
