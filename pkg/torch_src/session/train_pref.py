import os

from preference.config import TrainConfig
from preference.trainer import train
from session.session import Session, dump_results


class TrainPreferenceSession(Session):
    def __init__(self, base_config):
        super().__init__(base_config, "train-pref")

    def start(self, config: dict = None, **kwargs):
        train_config = TrainConfig.from_dict({k: config[k] for k in TrainConfig._fields})
        corpus = self.load_corpus(config)

        self.print_summary(config)
        with self.open_run(config) as run_path:
            result = train(corpus, train_config, run_path, disable_logging=config["disable_logging"],
                           tensorboard=config["tensorboard"])
            dump_results(os.path.join(run_path, "summary.json"), {
                "best_epoch": result.best_epoch,
                "best_val_itp_acc": result.best_score,
                "train_tasks": result.train_tasks,
                "val_tasks": result.val_tasks,
                "num_parameters": result.model.num_parameters(),
                "lambda1": train_config.lambda1,
                "lambda2": train_config.lambda2,
                "data_fraction": train_config.data_fraction,
                "seed": train_config.seed
            })
        self.log(config, f"Best validation ITP accuracy {result.best_score} at epoch {result.best_epoch}")
