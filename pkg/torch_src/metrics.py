"""
Different types of metrics which appear in log or tensorboard, and agreement measures between preference labels.
Some code is taken and modified from ignite.metrics library.
"""

from abc import ABC, abstractmethod
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import torch
from scipy.stats import pearsonr
from torch.utils.tensorboard import SummaryWriter

label_values = (0., 0.5, 1.)


class Metric(ABC):
    def __init__(self, name: str):
        self.name = name
        self.write_to_summary_interval = 1

    @abstractmethod
    def update(self, val: Union[float, torch.Tensor, Sequence[torch.Tensor]] = None, **kwargs):
        pass

    @property
    @abstractmethod
    def value(self):
        pass

    @abstractmethod
    def reset(self):
        pass

    def to_summary(self, summary: SummaryWriter, epoch: int):
        if self.write_to_summary_interval > 0 and epoch % self.write_to_summary_interval == 0:
            self._to_summary(summary, epoch)

    @abstractmethod
    def _to_summary(self, summary: SummaryWriter, epoch: int):
        pass

    def __str__(self):
        return f"{self.name}: {self.value:.4f}"


class ScalarMetric(Metric, ABC):
    def __init__(self, name: str):
        super().__init__(name)
        self.show_in_progress_log = True

    @property
    @abstractmethod
    def value(self) -> float:
        pass

    def _to_summary(self, summary: SummaryWriter, epoch: int):
        summary.add_scalar(self.name, self.value, epoch)


class SimpleMetric(ScalarMetric):
    def __init__(self, name: str):
        super().__init__(name)
        self.val = 0.

    def update(self, val: Union[float, torch.Tensor, Sequence[torch.Tensor]] = None, **kwargs):
        self.val = float(val)

    @property
    def value(self) -> float:
        return self.val

    def reset(self):
        self.val = 0.


class Mean(ScalarMetric):
    def __init__(self, name: str = "mean"):
        super().__init__(name)
        self._sum = 0.
        self._steps = 0

    def update(self, val: Union[float, torch.Tensor, Sequence[torch.Tensor]] = None, **kwargs):
        n = kwargs.get("num_items", 1)
        self._sum += float(val) * n
        self._steps += n

    @property
    def value(self) -> float:
        return self._sum / self._steps if self._steps > 0 else float("nan")

    def reset(self):
        self._sum = 0.
        self._steps = 0


class PairwiseAccuracy(ScalarMetric):
    """
    Accuracy of preferences predicted from score differences: the first item is preferred (label 0) if its score
    is higher. Equal scores never count as correct.
    """

    def __init__(self, name: str = "pairwise-accuracy"):
        super().__init__(name)
        self._num_correct = 0
        self._num_examples = 0

    def update(self, val: Union[float, torch.Tensor, Sequence[torch.Tensor]] = None, **kwargs):
        score_diff, y_true = val
        y_pred = torch.full_like(score_diff, 0.5)
        y_pred[score_diff > 0] = 0.
        y_pred[score_diff < 0] = 1.
        self._num_correct += torch.sum(y_pred == y_true.to(y_pred)).item()
        self._num_examples += len(y_true)

    @property
    def value(self) -> float:
        return self._num_correct / self._num_examples if self._num_examples > 0 else float("nan")

    def reset(self):
        self._num_correct = 0
        self._num_examples = 0


class MetricsContainer:
    """
    Utility class to store, update and format multiple metrics and distinguish between training and validation metrics.
    """

    def __init__(self, metrics: list):
        """
        :param metrics: List of metrics. Will be split into training and validation metrics based on their name.
        Loss metrics are named "<mode>_loss" or "<mode>_loss_<term>".
        """
        self._metrics = metrics
        self._training_losses = [m for m in metrics if m.name.startswith("training_loss")]
        self._validation_losses = [m for m in metrics if m.name.startswith("validation_loss")]

        self._training_metrics = [m for m in metrics if "train" in m.name and "loss" not in m.name]
        self._validation_metrics = [m for m in metrics if "val" in m.name and "loss" not in m.name]

        self._training_format_metrics = MetricsContainer._log_metrics(*self._training_losses,
                                                                      *self._training_metrics)
        self._validation_format_metrics = MetricsContainer._log_metrics(*self._validation_losses,
                                                                        *self._validation_metrics)
        self._progress_metrics = MetricsContainer._log_metrics(*self._metrics)
        self._metrics_dict = {m.name: m for m in self._metrics}

    @staticmethod
    def _log_metrics(*metrics) -> list:
        return [m for m in metrics if isinstance(m, ScalarMetric) and m.show_in_progress_log]

    def __getitem__(self, item):
        """
        Get a particular metric by name. Metric must exist or exception will be raised.
        :param item: name of the metric
        :return: metric associated to name
        """
        return self._metrics_dict[item]

    def values(self) -> Dict[str, float]:
        return {m.name: m.value for m in self._metrics if isinstance(m, ScalarMetric)}

    def to_summary(self, summary: SummaryWriter, epoch: int):
        """
        Writes all metrics to the summary.

        :param summary: summary writer
        :param epoch: current epoch
        """
        for metric in self._metrics:
            metric.to_summary(summary, epoch)

    def reset_all(self):
        """
        Reset all metrics to 0 / None values.
        """
        for m in self._metrics:
            m.reset()

    def _update(self, mode: str, losses: Dict[str, torch.Tensor], output: Tuple[torch.Tensor, torch.Tensor],
                metrics: Sequence[Metric]):
        num_items = len(output[1])
        for name, loss in losses.items():
            key = f"{mode}_{name}"
            if key in self._metrics_dict:
                self._metrics_dict[key].update(loss.item() if torch.is_tensor(loss) else loss, num_items=num_items)
        for m in metrics:
            m.update(output)

    def update_training(self, losses: Dict[str, torch.Tensor], output: Tuple[torch.Tensor, torch.Tensor]):
        """
        Update training losses and metrics.
        :param losses: loss terms by name, e.g. {"loss": ..., "loss_a": ...}
        :param output: Must be Tensor (score difference, y_true)
        """
        self._update("training", losses, output, self._training_metrics)

    def update_validation(self, losses: Dict[str, torch.Tensor], output: Tuple[torch.Tensor, torch.Tensor]):
        """
        Update validation losses and metrics.
        :param losses: loss terms by name
        :param output: Must be Tensor (score difference, y_true)
        """
        self._update("validation", losses, output, self._validation_metrics)

    def format_training(self) -> str:
        """
        :return: All training metrics and their values as a string.
        """
        return MetricsContainer.format(self._training_format_metrics)

    def format_validation(self) -> str:
        """
        :return: All validation metrics and their values as a string.
        """
        return MetricsContainer.format(self._validation_format_metrics)

    def format_all(self) -> str:
        """
        :return: All metrics and their values as a string.
        """
        return MetricsContainer.format(self._progress_metrics)

    @staticmethod
    def format(metrics: Sequence[Metric]) -> str:
        """
        :return: Join a sequence of metrics and their values and return the string.
        """
        return ", ".join(map(str, metrics))


def _label_vectors(pred, ref) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(getattr(pred, "labels", pred), dtype=np.float64)
    ref = np.asarray(getattr(ref, "labels", ref), dtype=np.float64)
    if pred.shape != ref.shape or pred.ndim != 1:
        raise ValueError(f"Label sets must be aligned, got {pred.shape} and {ref.shape}")
    if not np.all(np.isin(pred, label_values)) or not np.all(np.isin(ref, label_values)):
        raise ValueError(f"Labels must be in {label_values}")
    return pred, ref


def label_accuracy(pred, ref) -> float:
    """
    Exact-match accuracy between two aligned label sets (LabelSet objects or label sequences).
    """
    pred, ref = _label_vectors(pred, ref)
    if len(pred) == 0:
        raise ValueError("Cannot compute the accuracy of empty label sets")
    return float(np.mean(pred == ref))


def label_correlation(pred, ref) -> float:
    """
    Pearson correlation of numeric labels. Returns NaN if either label vector is constant.
    """
    pred, ref = _label_vectors(pred, ref)
    if len(pred) < 2 or np.all(pred == pred[0]) or np.all(ref == ref[0]):
        return float("nan")
    return float(pearsonr(pred, ref)[0])
