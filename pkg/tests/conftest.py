import numpy as np
import pytest

from nymkit.config import EngineConfig
from nymkit.nymcore import NymEngine
from nymkit.snapstore import LocalDirBackend, MockCloudBackend
from nymkit import sanivm


def fast_config(**overrides) -> EngineConfig:
    """Desk-scale test config: tiny byte pools, cheap KDF, seeded RNG."""
    values = dict(pool_bytes_per_mb=64, kdf_log2_n=4, rng_seed=1234)
    values.update(overrides)
    return EngineConfig(**values)


def make_engine(tmp_path, **overrides) -> NymEngine:
    engine = NymEngine(fast_config(**overrides))
    engine.register_backend("local", LocalDirBackend(tmp_path / "store"))
    engine.register_backend("cloud", MockCloudBackend(), host="cloud.example")
    return engine


@pytest.fixture
def engine(tmp_path) -> NymEngine:
    return make_engine(tmp_path)


def make_test_image(name: str, metadata=None, regions=None, width=24, height=16,
                    seed=0) -> sanivm.MediaFile:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    payload = sanivm.encode_image(width, height, pixels, metadata or {},
                                  regions or [])
    return sanivm.MediaFile(name=name, payload=payload)


def make_test_document(name: str, pages=None, metadata=None) -> sanivm.MediaFile:
    payload = sanivm.encode_document(pages or ["hello world"], metadata or {})
    return sanivm.MediaFile(name=name, payload=payload)


def build_corpus() -> list:
    """>= 30 fixture files spanning all kinds and tag combinations."""
    tag_sets = [
        {},
        {"gps.lat": "41.3", "gps.lon": "2.1"},
        {"serial": "SN-883271"},
        {"device_id": "cam-11"},
        {"author": "someone"},
        {"creator": "editor 9.1"},
        {"timestamp": "2014-05-01T10:00:00"},
        {"gps.lat": "1.0", "serial": "SN-1", "author": "x", "created": "2014"},
    ]
    corpus = []
    for i, tags in enumerate(tag_sets):
        corpus.append(make_test_image(f"img{i:02d}.nymbmp", tags, seed=i))
        corpus.append(make_test_image(
            f"img{i:02d}r.nymbmp", tags, regions=[(2, 2, 6, 5)], seed=100 + i))
        corpus.append(make_test_document(
            f"doc{i:02d}.nymdoc", ["page one text", "page two text"], tags))
        if i % 2 == 0:
            corpus.append(make_test_image(
                f"img{i:02d}w.nymbmp", tags, width=40, height=30,
                regions=[(0, 0, 8, 8), (20, 10, 10, 10)], seed=200 + i))
    corpus.append(make_test_document("long.nymdoc",
                                     [f"chapter {n}" for n in range(5)],
                                     {"author": "writer", "serial": "DOC-9"}))
    corpus.append(sanivm.MediaFile("mystery.bin", b"\x7fELF unknown payload"))
    corpus.append(sanivm.MediaFile("blob.dat", b"\x00\x01\x02 raw bytes"))
    return corpus


@pytest.fixture
def corpus() -> list:
    return build_corpus()
