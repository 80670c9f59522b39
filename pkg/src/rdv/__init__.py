"""Register-Deposit-Vote consensus with a deterministic network simulator."""
from .core import Block, Chain, KeyPair, Transaction, Vote, verify_chain
from .params import ClockParams, ProtocolParams

__all__ = ["Block", "Chain", "ClockParams", "KeyPair", "ProtocolParams", "Transaction",
           "Vote", "verify_chain"]
__version__ = "0.1.0"
