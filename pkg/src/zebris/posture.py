"""Seller security posture and its refund-ratio feedback."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping


def average_refund(refund_ratios: Iterable[float], current_posture: float) -> float:
    """Mean refund ratio of a seller's trades this round; the current posture if it had none."""
    vals = list(refund_ratios)
    if not vals:
        return current_posture
    return sum(vals) / len(vals)


def update_posture(q: float, rho_bar: float, omega: float) -> float:
    if not 0.0 < omega <= 1.0:
        raise ValueError("posture step must lie in (0, 1]")
    return q + omega * (rho_bar - q)


@dataclass
class PostureLedger:
    postures: dict[int, float]
    history: list[tuple[int, int, float, float]] = field(default_factory=list)  # (round, seller, q, rho_bar)

    def __post_init__(self) -> None:
        for sid, q in self.postures.items():
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"posture of seller {sid} outside [0, 1]")

    def current(self) -> list[float]:
        return [self.postures[sid] for sid in sorted(self.postures)]

    def apply(self, round_index: int, refunds: Mapping[int, list[float]], omega: float,
              dynamic: bool = True) -> dict[int, float]:
        """Update every seller simultaneously from this round's refund ratios.

        History rows record the posture used in the round and the averaged
        refund ratio. With ``dynamic`` off postures stay unchanged.
        """
        new = {}
        for sid in sorted(self.postures):
            q = self.postures[sid]
            rho_bar = average_refund(refunds.get(sid, ()), q)
            self.history.append((round_index, sid, q, rho_bar))
            new[sid] = min(1.0, max(0.0, update_posture(q, rho_bar, omega))) if dynamic else q
        self.postures = new
        return dict(new)
