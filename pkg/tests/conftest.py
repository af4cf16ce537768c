import numpy as np
import pytest

from routekit import LabelMatrix, LlmProfile, PromptRecord


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(0))


def make_prompts(n: int, d: int, seed: int = 0) -> list[PromptRecord]:
    gen = np.random.Generator(np.random.PCG64(seed))
    return [PromptRecord(id=f"p{i:04d}", embedding=gen.standard_normal(d)) for i in range(n)]


def make_pool(costs) -> list[LlmProfile]:
    return [LlmProfile(id=f"llm{j:02d}", cost=float(c)) for j, c in enumerate(costs)]


def make_labels(losses, mask=None) -> LabelMatrix:
    losses = np.asarray(losses, dtype=np.float64)
    if mask is None:
        mask = np.ones_like(losses, dtype=bool)
    return LabelMatrix(losses=losses, mask=np.asarray(mask, dtype=bool))
