import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from layoutjoint import Layout, make_layout, validate_layout

settings.register_profile(
    "deterministic",
    derandomize=True,
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("deterministic")


def random_layout(rng: np.random.Generator, n: int | None = None, max_n: int = 6) -> Layout:
    """Unvalidated-ish random layout: boxes may overlap arbitrarily."""
    n = n or int(rng.integers(1, max_n + 1))
    words = ["red", "blue", "green", "cup", "ball", "car", "big", "small", "wooden"]
    items = []
    for _ in range(n):
        w = rng.uniform(0.05, 0.6)
        h = rng.uniform(0.05, 0.6)
        x0 = rng.uniform(0.0, 1.0 - w)
        y0 = rng.uniform(0.0, 1.0 - h)
        k = int(rng.integers(1, 5))
        text = " ".join(words[i] for i in rng.integers(0, len(words), size=k))
        items.append((text, (x0, y0, x0 + w, y0 + h), None))
    return validate_layout(make_layout("a busy scene", items))


@pytest.fixture
def two_instance_layout() -> Layout:
    return validate_layout(
        make_layout(
            "a photo of a cup and a ball",
            [
                ("a red cup", (0.05, 0.1, 0.4, 0.5), "red"),
                ("a blue ball", (0.55, 0.5, 0.9, 0.9), "blue"),
            ],
        )
    )
