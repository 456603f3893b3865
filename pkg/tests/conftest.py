import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from selfsup.corpus import load_corpus, load_eval_corpus  # noqa: E402
from selfsup.evidence import load_evidences  # noqa: E402
from selfsup import synth  # noqa: E402


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """The planted synthetic corpus with generator defaults, built once per session."""
    out = tmp_path_factory.mktemp("synth")
    synth.generate(str(out))
    synth.write_seeds(str(out / "seeds.jsonl"), tokens_per_class=3)
    return str(out)


@pytest.fixture(scope="session")
def synth_train(synth_dir):
    return load_corpus(os.path.join(synth_dir, "train.jsonl"))


@pytest.fixture(scope="session")
def synth_test(synth_dir, synth_train):
    return load_eval_corpus(os.path.join(synth_dir, "test.jsonl"), synth_train)


@pytest.fixture(scope="session")
def synth_seeds(synth_dir, synth_train):
    """Six seed token evidences, three per class."""
    return load_evidences(os.path.join(synth_dir, "seeds.jsonl"), synth_train)


@pytest.fixture(scope="session")
def small_synth_dir(tmp_path_factory):
    """A miniature planted corpus for fast loop/service/CLI tests."""
    out = tmp_path_factory.mktemp("small_synth")
    synth.generate(str(out), n_train=120, n_test=60)
    synth.write_seeds(str(out / "seeds.jsonl"), tokens_per_class=3)
    return str(out)


@pytest.fixture(scope="session")
def small_train(small_synth_dir):
    return load_corpus(os.path.join(small_synth_dir, "train.jsonl"))


@pytest.fixture(scope="session")
def small_test(small_synth_dir, small_train):
    return load_eval_corpus(os.path.join(small_synth_dir, "test.jsonl"), small_train)


@pytest.fixture(scope="session")
def small_seeds(small_synth_dir, small_train):
    return load_evidences(os.path.join(small_synth_dir, "seeds.jsonl"), small_train)
