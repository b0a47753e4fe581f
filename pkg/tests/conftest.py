import pytest

import cloudmirror as cm


@pytest.fixture(scope="session")
def registry_csv():
    return cm.generate_registry_csv(rows=500, seed=42)


@pytest.fixture(scope="session")
def registry(registry_csv):
    return cm.load_registry(registry_csv)


@pytest.fixture
def single_vm():
    hosts = [cm.Host("h1", 1, 1000.0, 1024)]
    vms = [cm.Vm("vm1", "h1", 1, 1000.0, 512)]
    return hosts, vms
