"""Python access to the Pair-Net lab: synthesis, training, evaluation, scoring."""

import json

from . import _core

__all__ = [
    "synthesize",
    "train",
    "evaluate",
    "report",
    "random_pair_baseline",
    "desk_config",
    "hungarian",
    "read_pgm",
]


def _text(value):
    return value if isinstance(value, str) else json.dumps(value)


def synthesize(config=None):
    """Generate a dataset; returns (train, val) annotation dicts."""
    train, val = _core.synthesize(_text(config or {}))
    return json.loads(train), json.loads(val)


def train(config, train_data, val_data=None, out_dir="run"):
    """Train, write checkpoint/config/run files to out_dir and return the run record."""
    val = None if val_data is None else _text(val_data)
    return json.loads(_core.train(_text(config), _text(train_data), val, str(out_dir)))


def evaluate(checkpoint, config, data, ks=(20, 50, 100), optimal=False):
    return json.loads(_core.evaluate(str(checkpoint), _text(config), _text(data), list(ks), optimal))


def report(predictions_path, data, ks=(20, 50, 100), optimal=False):
    return json.loads(_core.report(str(predictions_path), _text(data), list(ks), optimal))


def random_pair_baseline(data, k, num_queries):
    return _core.random_pair_baseline(_text(data), k, num_queries)


def desk_config():
    return json.loads(_core.desk_config())


hungarian = _core.hungarian
read_pgm = _core.read_pgm
