import numpy as np
import pytest
import torch

from surrogate_se.dsp import Utterance
from surrogate_se.generator import GeneratorConfig, MaskGenerator
from surrogate_se.discriminator import DiscriminatorConfig, SurrogateDiscriminator

torch.set_num_threads(1)


def zero_parameters(module: torch.nn.Module) -> torch.nn.Module:
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def noise_utt(rng):
    return Utterance("noise", 0.1 * rng.standard_normal(16000))


@pytest.fixture
def small_generator():
    torch.manual_seed(0)
    return MaskGenerator(GeneratorConfig(blstm_width=8, fc_width=16))


@pytest.fixture
def small_discriminator():
    torch.manual_seed(0)
    return SurrogateDiscriminator(DiscriminatorConfig(filters=4, fc_widths=(8, 4)))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
