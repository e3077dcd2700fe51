from dataclasses import replace

import numpy as np
import pytest

from eegemotion.config import PipelineConfig
from eegemotion.core import SELECTED_CHANNELS
from eegemotion.io import SyntheticSpec, generate_synthetic
from eegemotion.pipeline import train_final


def small_config(**model) -> PipelineConfig:
    cfg = PipelineConfig()
    return replace(
        cfg,
        windows=replace(cfg.windows, train_step_s=1.0, selection_step_s=1.0),
        selection=replace(cfg.selection, iterations=2, n_trees=30),
        model=replace(cfg.model, **{"n_trees": 30, "run_sweep": False, **model}),
        split=replace(cfg.split, folds=3),
    )


@pytest.fixture(scope="session")
def cfg():
    return small_config()


@pytest.fixture(scope="session")
def runtime_spec():
    return SyntheticSpec(n_subjects=2, n_trials=12, trial_length_s=20.0, channels=SELECTED_CHANNELS)


@pytest.fixture(scope="session")
def runtime_recs(runtime_spec):
    return generate_synthetic(runtime_spec, seed=3)


@pytest.fixture(scope="session")
def trained(cfg, runtime_recs):
    return train_final(cfg, runtime_recs)


@pytest.fixture(scope="session")
def models(trained):
    return trained.models


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
