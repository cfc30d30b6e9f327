import os
import shutil
from typing import List

import numpy as np
import pandas as pd
import yaml

from preference.config import TrainConfig
from session.session import Session, load_results
from util.errors import MissingArtifactError
from util.preprocessing.data_writer import atomic_write
from util.visualization.model_visualization import create_heatmap, save_figure

relation_columns = ["itp_acc", "ivp_acc", "ilp_loss"]


def list_runs(out: str, command: str, result_file: str) -> List[str]:
    """
    Run directories of a command that contain a finished result file, sorted by run name.
    """
    root = os.path.join(out, command)
    if not os.path.isdir(root):
        return []
    return [os.path.join(root, d) for d in sorted(os.listdir(root))
            if os.path.isfile(os.path.join(root, d, result_file))]


def load_run_config(run_path: str) -> dict:
    with open(os.path.join(run_path, "config.yaml")) as f:
        return yaml.safe_load(f)


def relation_records(out: str) -> pd.DataFrame:
    rows = []
    for run in list_runs(out, "eval-relations", "relations.json"):
        config = load_run_config(run)
        pref_config_file = os.path.join(out, "train-pref", config["pref_run"], "config.yaml")
        if not os.path.isfile(pref_config_file):
            raise MissingArtifactError(f"Configuration of preference run not found: '{pref_config_file}'")
        pref_config = load_run_config(os.path.dirname(pref_config_file))
        for style, metrics in load_results(os.path.join(run, "relations.json"))["styles"].items():
            rows.append({
                "eval_run": os.path.basename(run),
                "pref_run": config["pref_run"],
                "lambda1": pref_config["lambda1"],
                "lambda2": pref_config["lambda2"],
                "data_fraction": pref_config["data_fraction"],
                "seed": pref_config["seed"],
                "style": style,
                **{c: np.nan if metrics.get(c) is None else metrics[c] for c in relation_columns}
            })
    return pd.DataFrame(rows)


def median_over_seeds(df: pd.DataFrame, keys: List[str], columns: List[str]) -> pd.DataFrame:
    grouped = df.groupby(keys, sort=True)
    out = grouped[columns].median()
    out["seeds"] = grouped["seed"].nunique()
    return out.reset_index()


def default_setting(df: pd.DataFrame, **exclude) -> pd.DataFrame:
    """
    Rows with the imperative style and default values for all ablated keys except the given ones.
    """
    defaults = TrainConfig()
    mask = df["style"] == "imperative"
    for key in ("lambda1", "lambda2", "data_fraction"):
        if key not in exclude:
            mask &= np.isclose(df[key], getattr(defaults, key))
    return df[mask]


def label_quality_records(out: str) -> pd.DataFrame:
    rows = []
    for run in list_runs(out, "annotate", "label_quality.json"):
        config = load_run_config(run)
        for task in load_results(os.path.join(run, "label_quality.json"))["tasks"]:
            rows.append({
                "label_run": os.path.basename(run),
                "pref_run": config["pref_run"],
                "seed": config["seed"],
                "task_id": task["task_id"],
                "label_accuracy": task["label_accuracy"],
                "label_correlation": np.nan if task["label_correlation"] is None else task["label_correlation"]
            })
    return pd.DataFrame(rows)


def downstream_records(out: str) -> pd.DataFrame:
    rows = []
    for run in list_runs(out, "train-rlhf", "results.json"):
        results = load_results(os.path.join(run, "results.json"))
        for r in results["runs"]:
            rows.append({
                "rlhf_run": os.path.basename(run),
                "seed": results["seed"],
                "task_id": r["task_id"],
                "algorithm": r["algorithm"],
                "label_source": r["label_source"] or "none",
                "score": np.nan if r["score"] is None else r["score"]
            })
    return pd.DataFrame(rows)


class ReportSession(Session):
    """
    Aggregate the artifacts of all runs below <out> into CSV and plain-text tables and ablation heat maps.
    """

    def __init__(self, base_config):
        super().__init__(base_config, "report")

    @staticmethod
    def write_table(run_path: str, name: str, df: pd.DataFrame):
        atomic_write(os.path.join(run_path, f"{name}.csv"),
                     df.to_csv(index=False, float_format="%.6f").encode("utf-8"))
        atomic_write(os.path.join(run_path, f"{name}.txt"),
                     (df.to_string(index=False, float_format=lambda x: f"{x:.4f}") + "\n").encode("utf-8"))

    def build_tables(self, config: dict) -> dict:
        out = config["out"]
        tables = {}
        relations = relation_records(out)
        if len(relations):
            keys = ["lambda1", "lambda2", "data_fraction", "style"]
            tables["relations"] = median_over_seeds(relations, keys, relation_columns)
            lambdas = default_setting(relations, lambda1=True, lambda2=True)
            if len(lambdas):
                tables["lambda_ablation"] = median_over_seeds(lambdas, ["lambda1", "lambda2"], relation_columns)
            sizes = default_setting(relations, data_fraction=True)
            if len(sizes):
                tables["data_size"] = median_over_seeds(sizes, ["data_fraction"], relation_columns)

        quality = label_quality_records(out)
        if len(quality):
            grouped = quality.groupby("task_id", sort=True)
            table = grouped[["label_accuracy", "label_correlation"]].mean()
            table["undefined_correlations"] = grouped["label_correlation"].apply(lambda c: int(c.isna().sum()))
            table["runs"] = grouped["label_run"].nunique()
            table = table.reset_index()
            summary = pd.DataFrame([{
                "task_id": "mean",
                "label_accuracy": quality["label_accuracy"].mean(),
                "label_correlation": quality["label_correlation"].mean(),
                "undefined_correlations": int(quality["label_correlation"].isna().sum()),
                "runs": quality["label_run"].nunique()
            }])
            tables["label_quality"] = pd.concat([table, summary], ignore_index=True)

        downstream = downstream_records(out)
        if len(downstream):
            grouped = downstream.groupby(["task_id", "algorithm", "label_source"], sort=True)
            table = grouped[["score"]].mean()
            table["seeds"] = grouped["seed"].nunique()
            tables["downstream"] = table.reset_index()
        return tables

    def start(self, config: dict = None, **kwargs):
        tables = self.build_tables(config)
        if not tables:
            raise MissingArtifactError(f"No finished eval-relations, annotate or train-rlhf runs found in "
                                       f"'{config['out']}'")

        with self.open_run(config) as run_path:
            for name, df in tables.items():
                self.write_table(run_path, name, df)
                self.log(config, f"{name}:\n{df.to_string(index=False)}")

            if config["heatmaps"]:
                for name, index, columns in (("lambda_ablation", "lambda1", "lambda2"),
                                             ("data_size", None, "data_fraction")):
                    if name not in tables:
                        continue
                    for metric in relation_columns:
                        if index is None:
                            grid = tables[name].set_index(columns)[[metric]].T
                            grid.index = [metric]
                        else:
                            grid = tables[name].pivot(index=index, columns=columns, values=metric)
                        save_figure(create_heatmap(grid, f"{metric} (median over seeds)"),
                                    os.path.join(run_path, f"{name}_{metric}.png"))

            for run in list_runs(config["out"], "eval-relations", "relations.json"):
                attention = os.path.join(run, "attention")
                if os.path.isdir(attention):
                    shutil.copytree(attention, os.path.join(run_path, "attention", os.path.basename(run)),
                                    dirs_exist_ok=True)
