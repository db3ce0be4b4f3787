from __future__ import annotations

import io
import sys
from pathlib import Path

import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parent))

from hailgauge.prompts import PromptEngine

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES_DIR = REPO_ROOT / "fixtures"
PROMPTS_DIR = REPO_ROOT / "prompts"


def jpeg_bytes(index: int, size: tuple[int, int] = (64, 48)) -> bytes:
    """Small JPEG with per-index pixel content so image hashes never collide."""
    image = Image.new(
        "RGB", size, ((index * 7) % 256, (index * 13 + 40) % 256, (index * 29 + 80) % 256)
    )
    image.putpixel((0, 0), (index % 256, 255 - index % 256, 3))
    buffer = io.BytesIO()
    image.save(buffer, "JPEG", quality=90)
    return buffer.getvalue()


def write_jpeg(path: Path, index: int, size: tuple[int, int] = (64, 48)) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(jpeg_bytes(index, size))
    return path


@pytest.fixture(scope="session")
def engine() -> PromptEngine:
    return PromptEngine(PROMPTS_DIR)


@pytest.fixture()
def image_factory(tmp_path):
    def make(index: int, name: str | None = None) -> Path:
        return write_jpeg(tmp_path / "images" / (name or f"img{index:03d}.jpg"), index)

    return make
