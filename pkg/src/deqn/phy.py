"""Link-level arithmetic: SINR, energy detection, CQI lookup and throughput."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Collection, Mapping

import numpy as np


class Modulation(enum.Enum):
    OUT_OF_RANGE = "out of range"
    QPSK = "QPSK"
    QAM16 = "16QAM"
    QAM64 = "64QAM"


@dataclass(frozen=True)
class CqiRow:
    cqi_index: int
    sinr_threshold_db: float
    modulation: Modulation
    code_rate_x1024: int
    efficiency_bits_per_symbol: float


_Q, _16, _64 = Modulation.QPSK, Modulation.QAM16, Modulation.QAM64

# LTE 4-bit CQI table; row 0 carries no efficiency (treated as 0 bits/symbol)
CQI_TABLE: tuple[CqiRow, ...] = (
    CqiRow(0, -np.inf, Modulation.OUT_OF_RANGE, 0, 0.0),
    CqiRow(1, -6.9360, _Q, 78, 0.1523),
    CqiRow(2, -5.1470, _Q, 120, 0.2344),
    CqiRow(3, -3.1800, _Q, 193, 0.3770),
    CqiRow(4, -1.2530, _Q, 308, 0.6016),
    CqiRow(5, 0.7610, _Q, 449, 0.8770),
    CqiRow(6, 2.6990, _Q, 602, 1.1758),
    CqiRow(7, 4.6940, _16, 378, 1.4766),
    CqiRow(8, 6.5250, _16, 490, 1.9141),
    CqiRow(9, 8.5730, _16, 616, 2.4063),
    CqiRow(10, 10.3660, _64, 466, 2.7305),
    CqiRow(11, 12.2890, _64, 567, 3.3223),
    CqiRow(12, 14.1730, _64, 666, 3.9023),
    CqiRow(13, 15.8880, _64, 772, 4.5234),
    CqiRow(14, 17.8140, _64, 873, 5.1152),
    CqiRow(15, 19.8290, _64, 948, 5.5547),
)

_THRESHOLDS_DB = np.array([r.sinr_threshold_db for r in CQI_TABLE[1:]])
_EFFICIENCY = np.array([r.efficiency_bits_per_symbol for r in CQI_TABLE])


@dataclass(frozen=True)
class SensingResult:
    channel: int
    energy: float
    num_slots: int


def compute_sinr(
    user: int,
    slot: int,
    active_transmitters: Collection[int],
    gains: Mapping[tuple[int, int], np.ndarray],
    powers: Mapping[int, float],
    noise: float,
) -> float:
    """Linear SINR at ``user``'s receiver in one slot.

    ``active_transmitters`` are the users transmitting on the user's channel
    (the user itself included); ``gains[(tx, rx)]`` is the complex gain series
    from ``tx``'s transmitter to ``rx``'s receiver.
    """
    if user not in active_transmitters:
        raise ValueError(f"user {user} is not among the active transmitters")

    def power_gain(tx, rx):
        try:
            series = gains[(tx, rx)]
        except KeyError:
            raise KeyError(f"missing gain series for link {tx}->{rx}") from None
        return abs(series[slot]) ** 2

    signal = powers[user] * power_gain(user, user)
    interference = sum(powers[z] * power_gain(z, user) for z in active_transmitters if z != user)
    return signal / (interference + noise)


def sinr_matrix(power_gain: np.ndarray, tx_power: np.ndarray, cochannel: np.ndarray, noise: float) -> np.ndarray:
    """Per-slot SINR of every user at once.

    power_gain : (S, U, U) array, ``[t, i, j]`` = |H|^2 from TX i to RX j.
    tx_power   : (U,) transmit powers.
    cochannel  : (U, U) 0/1 mask, 1 where TX i interferes with RX j (diagonal 0).
    """
    received = power_gain * tx_power[None, :, None]
    signal = np.diagonal(received, axis1=1, axis2=2)
    interference = np.einsum("tij,ij->tj", received, cochannel)
    return signal / (interference + noise)


def sense_energy(
    channel: int,
    gains: np.ndarray,
    pu_active: np.ndarray,
    pu_power: float,
    noise: float,
    rng: np.random.Generator,
) -> SensingResult:
    """Energy detector output over ``len(gains)`` sensing slots.

    Each slot receives ``sqrt(P) * H + w`` when the PU is active and ``w``
    otherwise, with ``w ~ CN(0, noise)``.
    """
    gains = np.asarray(gains)
    n = gains.shape[0]
    if n < 1:
        raise ValueError("sensing needs at least one slot")
    w = rng.standard_normal((n, 2)) * np.sqrt(noise / 2.0)
    y = np.sqrt(pu_power) * gains * np.asarray(pu_active, dtype=float) + (w[:, 0] + 1j * w[:, 1])
    return SensingResult(channel, float(np.sum(y.real**2 + y.imag**2)), n)


def sinr_to_efficiency(sinr_db: float) -> tuple[int, float]:
    """Highest CQI whose threshold is <= ``sinr_db`` and its spectral efficiency."""
    if not np.isfinite(sinr_db):
        raise ValueError("sinr_db must be finite")
    cqi = int(np.searchsorted(_THRESHOLDS_DB, sinr_db, side="right"))
    return cqi, float(_EFFICIENCY[cqi])


def efficiency_from_sinr(sinr_linear) -> np.ndarray:
    """Vectorised ``sinr_to_efficiency`` on linear SINR values."""
    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(sinr_linear)
    return _EFFICIENCY[np.searchsorted(_THRESHOLDS_DB, sinr_db, side="right")]


def throughput(efficiency, bandwidth_hz: float):
    """Bits per second at one symbol per Hz per second."""
    return efficiency * bandwidth_hz


def cqi_table_csv() -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cqi", "thresh_db", "mod", "rate", "eff"])
    for r in CQI_TABLE:
        thresh = "" if r.cqi_index == 0 else f"{r.sinr_threshold_db:.4f}"
        w.writerow([r.cqi_index, thresh, r.modulation.value, r.code_rate_x1024, f"{r.efficiency_bits_per_symbol:.4f}"])
    return buf.getvalue()
