import pytest
import torch
from hypothesis import settings

from invfold.dataset import SyntheticSpec, gen_synthetic
from invfold.model import ModelConfig, build_model

torch.set_num_threads(1)

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def tiny_data():
    return gen_synthetic(SyntheticSpec(n_samples=6, length_range=(12, 18), seed=3))


@pytest.fixture(scope="session")
def tiny_model_config():
    return ModelConfig(
        encoder={"d_model": 32, "n_layers": 2, "graph": {"k_neighbors": 8}},
        lm={"d_model": 32, "n_layers": 2, "n_heads": 2},
        adapter_heads=2,
    )


@pytest.fixture()
def tiny_model(tiny_model_config):
    return build_model(tiny_model_config, seed=0)
