import hashlib
import json
import os
import struct
from datetime import datetime, timedelta
from sys import stdout
from timeit import default_timer
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from torch.utils.tensorboard import SummaryWriter

from metrics import MetricsContainer
from util.errors import DatasetIntegrityError, MissingArtifactError
from util.preprocessing.data_writer import atomic_write, encode_header, header_length_format

checkpoint_magic = b"VLPCKPT1"
checkpoint_format_version = 1


class AnsiColors:
    BLACK = 30
    RED = 31
    GREEN = 32
    YELLOW = 33
    BLUE = 34
    MAGENTA = 35
    CYAN = 36
    WHITE = 37
    RESET = 39


def wrap_color(msg: str, color_code: int):
    """
    Wrap a message with a ANSI color code.
    :param msg: message
    :param color_code: ANSI color code
    :return: wrapped message
    """
    return f"\u001B[{color_code}m{msg}\u001B[0m"


def wrap_info(msg: str, ts: bool = True) -> str:
    """
    Wrap a message in blue color and optionally prepend a timestamp.
    :param msg: message
    :param ts: whether to include a timestamp
    :return: wrapped message
    """
    ts_fmt = f"[{datetime.now()}] " if ts else ""
    return wrap_color(ts_fmt + msg, AnsiColors.BLUE)


class StopWatch:
    """
    Measure duration of any operation.
    """

    def __init__(self):
        self.start_time = None
        self.end_time = None
        self.is_running = False

    def start(self):
        should_start = not self.is_running
        self.is_running = True
        if should_start:
            self.start_time = default_timer()

    def stop(self):
        if self.is_running:
            self.end_time = default_timer()
        self.is_running = False

    def get_elapsed(self) -> float:
        return default_timer() - self.start_time

    def get_stats(self, steps: int) -> Tuple[int, float]:
        if self.is_running:
            elapsed = self.get_elapsed()
        else:
            elapsed = self.total_duration
        seconds_per_step = elapsed / max(steps, 1)
        return int(round(elapsed)), seconds_per_step

    @property
    def total_duration(self) -> float:
        if self.start_time is None or self.end_time is None:
            return 0.
        return self.end_time - self.start_time


class ProgressLogger:
    def __init__(self, log_path: str, total_epochs: int, modes: List[Tuple[str, int]], tensorboard: bool = False,
                 file=stdout):
        self._log_path = log_path
        self._tensorboard = tensorboard
        self._total_epochs = total_epochs
        self._total_epochs_length = len(str(total_epochs))
        self._current_epoch = None
        self._epoch_fmt = None
        self._session_timer = StopWatch()
        self._modes_names = [m[0].capitalize() for m in modes]
        self._modes_total = [m[1] for m in modes]
        self._modes_steps = [0] * len(modes)
        self._modes_timer = []
        self._modes_fmt = [""] * len(modes)
        for _ in modes:
            self._modes_timer.append(StopWatch())
        self._file = file
        self._summary = None

    def _get_update_format(self, msg: str = ""):
        return f"\r{self._epoch_fmt} - " + msg + " - ".join(filter(None, self._modes_fmt))

    def begin_session(self, session_type: str):
        """
        Print session start info and start session timer.
        """
        if self._session_timer.is_running:
            return

        print(wrap_info(f"### START SESSION '{session_type.upper()}' ###", False), file=self._file)
        print(wrap_info(f"{self._total_epochs} epochs remaining."), file=self._file)
        if self._tensorboard:
            self._summary = SummaryWriter(self._log_path)
            print(wrap_info(f"TensorBoard logs are written to {self._log_path}."), file=self._file)

        self._session_timer.start()

    def end_session(self):
        """
        Print the running time of the session.
        """
        if not self._session_timer.is_running:
            return

        self._session_timer.stop()
        if self._summary is not None:
            self._summary.close()
        print(wrap_info(f"Session finished in {timedelta(seconds=self._session_timer.total_duration)}."),
              file=self._file)

    def begin_epoch(self, epoch: int):
        self._current_epoch = epoch
        self._epoch_fmt = f"Epoch {epoch + 1:{self._total_epochs_length}}/{self._total_epochs}"
        self._modes_steps = [0] * len(self._modes_total)
        self._modes_fmt = [""] * len(self._modes_total)
        print(self._epoch_fmt, end="", file=self._file)

    def end_epoch(self, metrics: MetricsContainer):
        assert self._current_epoch >= 0
        for timer in self._modes_timer:
            timer.stop()
        total_elapsed_time = timedelta(seconds=sum(timer.total_duration for timer in self._modes_timer))

        for mode in range(len(self._modes_total)):
            if self._modes_steps[mode] < self._modes_total[mode]:
                self._modes_fmt[mode] = ""
                continue
            elapsed, seconds_per_step = self._modes_timer[mode].get_stats(self._modes_total[mode])
            self._modes_fmt[mode] = f"{self._modes_names[mode]}: {elapsed}s {seconds_per_step:.3f}s/step"

        fmt = self._get_update_format(str(total_elapsed_time) + " - ")
        fmt += " - " + metrics.format_all()
        print(wrap_color(fmt, AnsiColors.MAGENTA), file=self._file)

        if self._summary is not None:
            metrics.to_summary(self._summary, self._current_epoch + 1)

    def update_epoch_mode(self, mode: int, n: int = 1, metrics: str = None):
        self._modes_steps[mode] += n
        elapsed, seconds_per_step = self._modes_timer[mode].get_stats(self._modes_steps[mode])
        eta = int((self._modes_total[mode] - self._modes_steps[mode]) * seconds_per_step)

        self._modes_fmt[mode] = f"{self._modes_names[mode]}: {self._modes_steps[mode]}/{self._modes_total[mode]}" \
                                f" {elapsed}s (ETA {eta}s) {seconds_per_step:.3f}s/step"

        fmt = self._get_update_format()
        if metrics is not None:
            fmt += " - " + metrics
        print(fmt, end="", file=self._file)

    def begin_epoch_mode(self, mode: int):
        for i in range(len(self._modes_total)):
            timer = self._modes_timer[i]
            if timer.is_running:
                timer.stop()
                elapsed, seconds_per_step = self._modes_timer[i].get_stats(self._modes_total[i])
                self._modes_fmt[i] = f"{self._modes_names[i]}: {self._modes_steps[i]}/" \
                                     f"{self._modes_total[i]} {elapsed}s {seconds_per_step:.3f}s/step"
                self._modes_fmt[i] = wrap_color(self._modes_fmt[i], AnsiColors.MAGENTA)
        self._modes_timer[mode].start()


class JsonLinesLog:
    """
    Append-only log with one sorted-key JSON object per line.
    """

    def __init__(self, out_file: str):
        self.out_file = out_file
        with open(self.out_file, "w"):
            pass

    def write(self, **record):
        with open(self.out_file, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def save_checkpoint(out_file: str, kind: str, config: dict, state_dict: Dict[str, torch.Tensor],
                    vocab_hash: Optional[str] = None, extra: Optional[dict] = None):
    """
    Write parameters into a `VLPCKPT1` container: magic, JSON header (kind, config, vocabulary hash, blob
    names / shapes / SHA-256), followed by the little-endian float32 blobs in header order.

    :param out_file: destination file
    :param kind: checkpoint kind tag, e.g. "preference-model" or "policy"
    :param config: constructor configuration of the network
    :param state_dict: named parameter tensors
    :param vocab_hash: hash of the vocabulary the network was trained with
    :param extra: additional JSON-serializable information
    """
    blobs = []
    entries = []
    for name in sorted(state_dict):
        data = state_dict[name].detach().cpu().to(torch.float32).contiguous().numpy().astype("<f4").tobytes()
        entries.append({"name": name, "shape": list(state_dict[name].shape),
                        "sha256": hashlib.sha256(data).hexdigest()})
        blobs.append(data)
    header = {
        "kind": kind,
        "format_version": checkpoint_format_version,
        "config": config,
        "vocab_hash": vocab_hash,
        "blobs": entries,
        "extra": extra or {}
    }
    os.makedirs(os.path.dirname(os.path.abspath(out_file)), exist_ok=True)
    atomic_write(out_file, encode_header(checkpoint_magic, header) + b"".join(blobs))


def load_checkpoint(in_file: str, kind: Optional[str] = None,
                    vocab_hash: Optional[str] = None) -> Tuple[dict, Dict[str, torch.Tensor]]:
    """
    Read a `VLPCKPT1` container and verify its blob checksums.

    :param in_file: checkpoint file
    :param kind: expected kind tag (not checked if None)
    :param vocab_hash: expected vocabulary hash (not checked if None)
    :return: tuple (header, state dict)
    """
    if not os.path.isfile(in_file):
        raise MissingArtifactError(f"Checkpoint not found: '{in_file}'")
    with open(in_file, "rb") as f:
        data = f.read()
    prefix = len(checkpoint_magic) + struct.calcsize(header_length_format)
    if len(data) < prefix or data[:len(checkpoint_magic)] != checkpoint_magic:
        raise DatasetIntegrityError(in_file, "not a checkpoint file")
    header_length, = struct.unpack(header_length_format, data[len(checkpoint_magic):prefix])
    try:
        header = json.loads(data[prefix:prefix + header_length].decode("utf-8"))
    except ValueError as e:
        raise DatasetIntegrityError(in_file, f"malformed checkpoint header ({e})")
    if header.get("format_version") != checkpoint_format_version:
        raise DatasetIntegrityError(in_file, f"unsupported checkpoint version {header.get('format_version')}")
    if kind is not None and header["kind"] != kind:
        raise DatasetIntegrityError(in_file, f"expected a '{kind}' checkpoint, found '{header['kind']}'")
    if vocab_hash is not None and header["vocab_hash"] != vocab_hash:
        raise DatasetIntegrityError(in_file, "checkpoint was trained with a different vocabulary")

    state_dict = {}
    offset = prefix + header_length
    for entry in header["blobs"]:
        size = 4 * int(np.prod(entry["shape"], dtype=np.int64))
        blob = data[offset:offset + size]
        if len(blob) != size or hashlib.sha256(blob).hexdigest() != entry["sha256"]:
            raise DatasetIntegrityError(in_file, f"checksum mismatch in blob '{entry['name']}'")
        state_dict[entry["name"]] = torch.from_numpy(np.frombuffer(blob, dtype="<f4").reshape(entry["shape"]).copy())
        offset += size
    if offset != len(data):
        raise DatasetIntegrityError(in_file, "trailing bytes after the last blob")
    return header, state_dict


class CheckpointManager:
    """
    Keep the best (by validation score) and the final weights of a network in `VLPCKPT1` containers.
    """

    def __init__(self, checkpoint_path: str, kind: str, config: dict, vocab_hash: Optional[str] = None):
        self.checkpoint_path = checkpoint_path
        self.kind = kind
        self.config = config
        self.vocab_hash = vocab_hash
        self.best_score = None

    def _file(self, name: str) -> str:
        return os.path.join(self.checkpoint_path, f"{name}.ckpt")

    def save_weights(self, model: torch.nn.Module, name: str = "final", **extra):
        save_checkpoint(self._file(name), self.kind, self.config, model.state_dict(), self.vocab_hash, extra)

    def save_best(self, model: torch.nn.Module, score: float, epoch: int) -> bool:
        """
        Save the weights as 'best' if the score improves on all previous calls.
        :return: whether the checkpoint was written
        """
        if self.best_score is not None and score <= self.best_score:
            return False
        self.best_score = score
        self.save_weights(model, "best", epoch=epoch, score=score)
        return True


def apply_state_dict(model: torch.nn.Module, state_dict: Dict[str, torch.Tensor]):
    """
    Load float32 blobs into a model, casting to the dtype / device of its parameters.
    """
    current = model.state_dict()
    missing = set(current) ^ set(state_dict)
    if missing:
        raise ValueError(f"Checkpoint does not match the model, mismatching keys: {sorted(missing)}")
    model.load_state_dict({k: v.to(dtype=current[k].dtype, device=current[k].device) for k, v in state_dict.items()})
