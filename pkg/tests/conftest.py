import pytest

from objstore_emu.client_api import ObjectStore


@pytest.fixture
def store(tmp_path):
    return ObjectStore.init(tmp_path / "store", 4)
