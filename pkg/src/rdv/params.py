from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ClockParams:
    """Propagation bound ``m`` and clock tolerance ``slack``, in ticks."""

    m: int = 5
    slack: int = 0

    def __post_init__(self):
        if self.m < 0 or self.slack < 0:
            raise ValueError("clock parameters must be non-negative")


@dataclass(frozen=True)
class ProtocolParams:
    delta: int = 20
    pi: int = 50
    deposit: int = 4
    penalty: int = 0  # 0 selects the default of deposit // 4 (at least 1)
    clock: ClockParams = field(default_factory=ClockParams)

    def __post_init__(self):
        if self.penalty == 0:
            object.__setattr__(self, "penalty", max(1, self.deposit // 4))
        if self.delta <= 0 or self.pi <= 0 or self.deposit <= 0:
            raise ValueError("delta, pi and deposit must be positive")
        if not 0 < self.penalty <= self.deposit:
            raise ValueError("penalty must satisfy 0 < p <= d")
        if self.delta <= self.clock.m:
            # an honest vote sent at round start must land before the deadline
            raise ValueError("delta must exceed the propagation bound m")
