import os

from datasets.stage_world.env import make_registry
from datasets.stage_world.preprocess_data import build_dataset
from session.session import Session, dataset_dir
from util.errors import ConfigurationError


class BuildDataSession(Session):
    def __init__(self, base_config):
        super().__init__(base_config, "build-data")

    def start(self, config: dict = None, **kwargs):
        registry = make_registry(config["registry_seed"])
        if config["task_ids"]:
            known = {t.task_id for t in registry}
            unknown = sorted(set(config["task_ids"]) - known)
            if unknown:
                raise ConfigurationError(f"Unknown task ids {unknown}, valid ids: {sorted(known)}")
            registry = [t for t in registry if t.task_id in config["task_ids"]]
        if config["trajs_per_level"] < 2 or config["instr_per_task"] < 1:
            raise ConfigurationError("trajs_per_level must be >= 2 and instr_per_task >= 1")

        self.print_summary(config)
        with self.open_run(config) as run_path:
            manifest = build_dataset(os.path.join(run_path, dataset_dir), registry, config["trajs_per_level"],
                                     config["instr_per_task"], config["seed"], config["registry_seed"],
                                     config["num_workers"], show_progress=not config["disable_logging"])
        self.log(config, f"Wrote {manifest.num_trajectories} trajectories of {len(manifest.registry)} tasks "
                         f"({len([t for t in manifest.registry if t.split == 'test'])} test tasks)")
