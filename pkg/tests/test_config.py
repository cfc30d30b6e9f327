import os

import pytest
import yaml

import session_helper
from config import command_line, get_configuration, make_command_config
from main import exit_code, main
from util.errors import ConfigurationError, DivergenceError, MissingArtifactError, OutputLockedError
from util.merge import parse_overrides

commands = tuple(session_helper.session_types.keys())
config_dir = os.path.join(os.path.dirname(__file__), os.pardir, "config", "stage-world")


def resolve(*argv):
    return make_command_config(get_configuration(commands, list(argv)))


def test_defaults_and_seed_templating():
    config = resolve("annotate", "--seed", "3")
    assert config["seed"] == 3
    assert config["run_name"] == "seed-3"
    assert config["pref_run"] == "seed-3"
    assert config["data_run"] == "seed-0"


def test_resolution_order(tmp_path):
    file_name = str(tmp_path / "train-pref.yaml")
    with open(file_name, "w") as f:
        yaml.safe_dump({"lambda1": 0.2, "epochs": 7, "seed": 4, "run_name": "a_seed-{seed}"}, f)
    from_file = resolve("train-pref", "-c", file_name)
    assert from_file["lambda1"] == 0.2 and from_file["epochs"] == 7
    assert from_file["run_name"] == "a_seed-4"
    overridden = resolve("train-pref", "-c", file_name, "--set", "lambda1=0.3", "--seed", "9", "-o", "/tmp/x")
    assert overridden["lambda1"] == 0.3
    assert overridden["epochs"] == 7
    assert overridden["seed"] == 9 and overridden["run_name"] == "a_seed-9"
    assert overridden["out"] == "/tmp/x"


def test_override_values_are_yaml():
    assert parse_overrides(["lambda2=0.5", "instruction_styles=[phrase, description]", "a=x=y", "b="]) == {
        "lambda2": 0.5, "instruction_styles": ["phrase", "description"], "a": "x=y", "b": None}
    with pytest.raises(ValueError):
        parse_overrides(["lambda2"])


def test_type_checks():
    assert resolve("train-pref", "--set", "lambda1=1")["lambda1"] == 1.
    assert isinstance(resolve("train-pref", "--set", "lambda1=1")["lambda1"], float)
    with pytest.raises(ConfigurationError):
        resolve("train-pref", "--set", "epochs=many")
    with pytest.raises(ConfigurationError):
        resolve("train-pref", "--set", "epochs=true")
    with pytest.raises(ConfigurationError):
        resolve("train-rlhf", "--set", "algorithms=iql")


def test_unknown_and_invalid_keys(tmp_path):
    with pytest.raises(ConfigurationError):
        resolve("train-pref", "--set", "bogus=1")
    with pytest.raises(ConfigurationError):
        resolve("train-pref", "--set", "fusion=sum")
    with pytest.raises(ConfigurationError):
        resolve("report", "--set", "lambda1=0.1")
    with pytest.raises(ConfigurationError):
        resolve("train-pref", "--set", "run_name=a/b")
    with pytest.raises(ConfigurationError):
        resolve("train-pref", "--set", "run_name=seed-{run}")
    with pytest.raises(ConfigurationError):
        resolve("train-pref", "-c", str(tmp_path / "missing.yaml"))
    broken = tmp_path / "broken.yaml"
    broken.write_text("lambda1: [0.1\n")
    with pytest.raises(ConfigurationError):
        resolve("train-pref", "-c", str(broken))
    listed = tmp_path / "list.yaml"
    listed.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError):
        resolve("train-pref", "-c", str(listed))


@pytest.mark.parametrize("file_name", sorted(os.listdir(config_dir)))
def test_shipped_configurations_resolve(file_name):
    command = file_name[:-len(".yaml")].split("_")[0]
    config = resolve(command, "-c", os.path.join(config_dir, file_name), "--seed", "2")
    assert "{seed}" not in config["run_name"]
    assert config["run_name"].endswith("seed-2")


def test_command_line_quoting():
    assert command_line(["train-pref", "--set", "run_name=a b"]) == "main.py train-pref --set 'run_name=a b'\n"


def test_exit_codes():
    assert exit_code(ConfigurationError("x")) == 2
    assert exit_code(MissingArtifactError("x")) == 3
    assert exit_code(DivergenceError("q", 1, float("nan"))) == 4
    assert exit_code(OutputLockedError("x")) == 4
    assert exit_code(KeyError("x")) == 4


def test_main_rejects_unknown_key(tmp_path):
    assert main(["train-pref", "-o", str(tmp_path), "--set", "bogus=1", "--disable_logging"]) == 2
    assert os.listdir(tmp_path) == []


def test_report_without_runs(tmp_path):
    assert main(["report", "-o", str(tmp_path), "--disable_logging"]) == 3
    assert os.listdir(tmp_path) == []


def test_missing_upstream_run(tmp_path):
    assert main(["train-pref", "-o", str(tmp_path), "--disable_logging"]) == 3
    assert main(["annotate", "-o", str(tmp_path), "--disable_logging"]) == 3
    assert not os.path.exists(tmp_path / "train-pref")


def test_locked_run_directory(tmp_path):
    run = tmp_path / "build-data" / "seed-0"
    run.mkdir(parents=True)
    (run / ".lock").write_text("")
    argv = ["build-data", "-o", str(tmp_path), "--set", "task_ids=[press-red, push-red]", "--set", "trajs_per_level=2",
            "--set", "instr_per_task=1", "--disable_logging"]
    assert main(argv) == 4
    assert sorted(os.listdir(run)) == [".lock"]
