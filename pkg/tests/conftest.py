import pytest
from hypothesis import HealthCheck, settings

from rdv.core import Allocation, KeyPair, make_genesis, make_mint, minted_coins
from rdv.params import ClockParams, ProtocolParams

settings.register_profile("rdv", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("rdv")


@pytest.fixture(scope="session")
def keys():
    return {n: KeyPair.from_seed(f"test:{n}") for n in "abcdefgh"}


@pytest.fixture
def params():
    return ProtocolParams(delta=10, pi=30, deposit=4, penalty=1, clock=ClockParams(m=3, slack=0))


@pytest.fixture
def world(keys):
    """Genesis with voters a, b, c (10 coins each) and ordinary node o=d (5 coins)."""
    allocs = [Allocation(keys[n].node_id, 10, True) for n in "abc"]
    allocs.append(Allocation(keys["d"].node_id, 5))
    g = make_genesis(make_mint(allocs))
    coins = {n: minted_coins(g.tx)[keys[n].node_id] for n in "abcd"}
    return g, coins
