import copy
from typing import Iterable, Sequence

import yaml


def deep_merge_dictionary(dictionaries: Iterable[dict]) -> dict:
    def _merge_dictionary(a: dict, b: dict):
        for key, b_val in b.items():
            a_val = a.get(key, None)
            if type(a_val) is dict and type(b_val) is dict:
                _merge_dictionary(a_val, b_val)
            else:
                a[key] = copy.deepcopy(b_val)

    out = {}
    for d in dictionaries:
        _merge_dictionary(out, d)
    return out


def parse_overrides(assignments: Sequence[str]) -> dict:
    """
    Parse 'key=value' strings. Values are read as YAML, e.g. "lambda2=0.5" gives a float and
    "instruction_styles=[phrase, description]" a list.

    :param assignments: strings of the form key=value
    :return: dictionary of overrides, later assignments win
    """
    out = {}
    for assignment in assignments:
        key, sep, value = assignment.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(f"Expected key=value, got '{assignment}'")
        out[key] = yaml.safe_load(value) if value.strip() else None
    return out
