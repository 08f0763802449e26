import numpy as np
import pytest
import torch
from PIL import Image

from mmdisparity.data import EMOTION, DatasetVersion, Language, MultimodalExample

torch.set_num_threads(1)

PATCH_COLORS = [(230, 25, 75), (60, 180, 75), (0, 130, 200), (255, 225, 25)]
KEYWORDS = [("storm", "flood"), ("bridge", "road"), ("happy", "party"), ("angry", "rage")]


def patch_image(label: int, rng: np.random.Generator, size: int = 64) -> np.ndarray:
    img = np.full((size, size, 3), 120, dtype=np.uint8)
    top, left = rng.integers(0, size // 2, size=2)
    img[top : top + size // 2, left : left + size // 2] = PATCH_COLORS[label]
    return img


def make_version(language=Language.EN, n=(24, 12, 12), task=EMOTION, seed=0, image_dir=None,
                 provenance="original") -> DatasetVersion:
    """Small keyword-separable dataset; images written under image_dir if given."""
    rng = np.random.default_rng(seed)
    examples = []
    i = 0
    for split, count in zip(("train", "validation", "test"), n):
        for k in range(count):
            label = k % task.num_classes
            words = [KEYWORDS[label % 4][rng.integers(2)] for _ in range(3)]
            ex_id = f"ex{i:04d}"
            if image_dir is not None:
                Image.fromarray(patch_image(label % 4, rng)).save(image_dir / f"{ex_id}.png")
            examples.append(MultimodalExample(ex_id, " ".join(words) + f" item {k}", f"{ex_id}.png",
                                              label, Language.parse(language), split))
            i += 1
    return DatasetVersion(task, Language.parse(language), tuple(examples), provenance)


@pytest.fixture
def image_dataset(tmp_path):
    return make_version(image_dir=tmp_path), tmp_path


# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
