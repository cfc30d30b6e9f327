import os

from labeling.annotation import label_sources, load_label_set
from models.rlhf.networks import policy_checkpoint_kind, reward_checkpoint_kind, save_network
from rlhf.cpl import CPLConfig, cpl_train
from rlhf.evaluation import RandomPolicy, ScriptedExpertPolicy, evaluate_policy
from rlhf.iql import IQLConfig, iql_train, piql_train
from rlhf.offline_dataset import OfflineDataset, rescale_rewards
from rlhf.reward_learning import learn_reward, preference_accuracy
from session.annotate import label_file
from session.session import Session, dump_results
from torch_util import get_device, set_seed
from util.errors import ConfigurationError

algorithms = ("iql", "piql", "cpl")


def policy_config(config: dict, prefix: str, config_type):
    """
    Collect '<prefix>_<field>' keys and the shared evaluation settings into an IQLConfig / CPLConfig.
    """
    shared = {k: config[k] for k in ("seed", "eval_interval", "eval_episodes", "eval_window")}
    values = {k: config[f"{prefix}_{k}"] for k in config_type._fields if k not in shared}
    values["hidden_sizes"] = tuple(values["hidden_sizes"])
    policy = config_type(**values, **shared)
    try:
        policy.validate()
    except ValueError as e:
        raise ConfigurationError(str(e))
    return policy


class TrainRlhfSession(Session):
    """
    Downstream policy learning on the test tasks: IQL on ground-truth rewards, P-IQL and CPL on the labels of an
    annotate run, plus the random and scripted expert references.
    """

    def __init__(self, base_config):
        super().__init__(base_config, "train-rlhf")

    def start(self, config: dict = None, **kwargs):
        unknown = sorted(set(config["algorithms"]) - set(algorithms))
        if unknown:
            raise ConfigurationError(f"Unknown algorithms {unknown}, valid algorithms: {list(algorithms)}")
        if config["label_source"] not in label_sources:
            raise ConfigurationError(f"label_source must be one of {label_sources}")
        iql_config = policy_config(config, "iql", IQLConfig)
        cpl_config = policy_config(config, "cpl", CPLConfig)
        corpus = self.load_corpus(config)
        task_ids = self.select_tasks(corpus, config["task_ids"])
        needs_labels = any(a in config["algorithms"] for a in ("piql", "cpl"))
        label_path = self.upstream_path(config, "annotate", "label_run") if needs_labels else None
        label_sets = {t: load_label_set(label_file(label_path, t, config["label_source"])) for t in task_ids} \
            if needs_labels else {}
        device = get_device(config["device"])
        disable_logging = config["disable_logging"]

        self.print_summary(config)
        with self.open_run(config) as run_path:
            runs = []
            for task_id in task_ids:
                task = corpus.task(task_id)
                dataset = OfflineDataset.from_corpus(corpus, task_id)
                self.log(config, f"Task {task_id}: {len(dataset)} transitions")

                if config["references"]:
                    for name, policy in (("random", RandomPolicy()), ("expert", ScriptedExpertPolicy())):
                        success = evaluate_policy(policy, task, config["eval_episodes"], config["seed"])
                        runs.append({"task_id": task_id, "algorithm": name, "label_source": None, "score": success,
                                     "evaluations": [[0, success]]})

                for algorithm in (a for a in algorithms if a in config["algorithms"]):
                    set_seed(config["seed"])
                    record = {"task_id": task_id, "algorithm": algorithm,
                              "label_source": "ground-truth" if algorithm == "iql" else config["label_source"]}
                    if algorithm == "iql":
                        result = iql_train(dataset.with_rewards(rescale_rewards(dataset.true_rewards)), iql_config,
                                           task, device, disable_logging=disable_logging)
                    elif algorithm == "piql":
                        labels = label_sets[task_id]
                        reward = learn_reward(labels, dataset, config["reward_epochs"], config["reward_batch_size"],
                                              config["reward_lr"], config["seed"], config["reward_hidden_sizes"],
                                              config["reward_dropout"], device, disable_logging=disable_logging)
                        save_network(reward, os.path.join(run_path, "rewards", f"{task_id}.ckpt"),
                                     reward_checkpoint_kind, task_id=task_id, label_source=config["label_source"])
                        record["reward_train_accuracy"] = preference_accuracy(reward, dataset, labels, device)
                        result = piql_train(dataset, reward, iql_config, task, device,
                                            disable_logging=disable_logging)
                    else:
                        result = cpl_train(label_sets[task_id], dataset, cpl_config, task, device,
                                           disable_logging=disable_logging)
                    save_network(result.policy, os.path.join(run_path, "policies", task_id, f"{algorithm}.ckpt"),
                                 policy_checkpoint_kind, task_id=task_id, algorithm=algorithm,
                                 label_source=record["label_source"])
                    record.update(score=result.score, evaluations=[list(e) for e in result.evaluations],
                                  losses=result.losses)
                    runs.append(record)
                    self.log(config, f"{task_id} {algorithm}: success score {result.score:.3f}")

            dump_results(os.path.join(run_path, "results.json"), {
                "label_source": config["label_source"],
                "seed": config["seed"],
                "reward_normalization": "affine rescaling to [0, 1] over the offline dataset",
                "iql": iql_config._asdict(),
                "cpl": cpl_config._asdict(),
                "runs": runs
            })
