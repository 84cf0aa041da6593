"""Comparison MACs: globally synchronised fixed duty cycling (SMAC-like) and
preamble-addressed round-robin TDMA (PB-TDMA)."""

from __future__ import annotations

from dataclasses import dataclass

from .common import ConfigError, MacAction


@dataclass(frozen=True)
class DutyCycleConfig:
    listen_us: int = 115_000
    sleep_us: int = 885_000

    def __post_init__(self):
        if self.listen_us <= 0 or self.sleep_us <= 0:
            raise ConfigError("SMAC listen_us and sleep_us must both be > 0 (duty cycle strictly inside (0, 1))")

    @property
    def cycle_us(self) -> int:
        return self.listen_us + self.sleep_us

    @property
    def duty_cycle(self) -> float:
        return self.listen_us / self.cycle_us

    def in_listen(self, t: int) -> bool:
        return t % self.cycle_us < self.listen_us

    def next_listen(self, t: int) -> int:
        """Start of the listen period containing or following ``t``."""
        cycle_start = t - t % self.cycle_us
        return cycle_start if self.in_listen(t) else cycle_start + self.cycle_us


@dataclass(frozen=True)
class PreambleSlotConfig:
    slot_us: int = 50_000
    preamble_us: int = 5_000
    # Slot-ownership order; empty means node registration order.
    addresses: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0 < self.preamble_us < self.slot_us:
            raise ConfigError("PB-TDMA needs 0 < preamble_us < slot_us")

    def owner(self, slot_index: int, order: tuple[str, ...] | None = None) -> str:
        order = order or self.addresses
        return order[slot_index % len(order)]


def smac_step(node: str, t: int, cfg: DutyCycleConfig, queue_len: int) -> MacAction:
    if not cfg.in_listen(t):
        return MacAction.SLEEP
    return MacAction.BACKOFF if queue_len else MacAction.LISTEN


def pbtdma_step(node: str, t: int, cfg: PreambleSlotConfig, queue_len: int, order: tuple[str, ...] | None = None) -> MacAction:
    slot_index, offset = divmod(t, cfg.slot_us)
    if offset < cfg.preamble_us:
        return MacAction.RECEIVE
    if cfg.owner(slot_index, order) != node:
        return MacAction.SLEEP
    return MacAction.TRANSMIT if queue_len else MacAction.LISTEN
