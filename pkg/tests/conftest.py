import random

import pytest

from pyOSEP.config import ProtocolConfig
from pyOSEP.crypto import PaillierKeypair, PrivateKey, keygen


@pytest.fixture(scope="session")
def tiny_keypair():
    # n = 15, the textbook key
    sk = PrivateKey(3, 5)
    return PaillierKeypair(sk.public_key, sk)


@pytest.fixture(scope="session")
def keypair64():
    return keygen(64, random.Random(64))


@pytest.fixture(scope="session")
def keypair512():
    return keygen(512, random.Random(512))


@pytest.fixture(scope="session")
def other_keypair512():
    return keygen(512, random.Random(1512))


@pytest.fixture(scope="session")
def keypair1024():
    return keygen(1024, random.Random(1024))


@pytest.fixture
def config():
    return ProtocolConfig(key_bits=512)
