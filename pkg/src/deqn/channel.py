"""Network geometry and time-correlated channel gains.

Each link gain is the product of a log-distance path loss, a log-normal
shadowing draw that is fixed for the whole run, and a unit-power complex
Gauss-Markov (AR(1)) Rayleigh fading process::

    f[0] ~ CN(0, 1)
    f[t] = rho * f[t-1] + sqrt(1 - rho**2) * w[t],   w[t] ~ CN(0, 1)

Every link draws from its own random stream seeded by ``(seed, link.index)``,
so a series never depends on the order in which links are generated.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .config import ConfigError, ScenarioConfig


class LinkKind(enum.Enum):
    DESIRED = "desired"
    SU_SU_INTERFERENCE = "su_su"
    SUT_TO_PUR = "sut_pur"
    PUT_TO_SUR = "put_sur"
    SENSING = "sensing"


@dataclass(frozen=True)
class NodePosition:
    x: float
    y: float


@dataclass(frozen=True)
class LinkSpec:
    index: int
    tx_node: str
    rx_node: str
    kind: LinkKind


@dataclass(frozen=True)
class ChannelModelConfig:
    path_loss_exponent: float = 3.5
    reference_loss_db: float = 46.0
    shadowing_sigma_db: float = 8.0
    fading_correlation: float = 0.99
    fading: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.path_loss_exponent <= 0:
            raise ConfigError("path_loss_exponent must be > 0")
        if self.shadowing_sigma_db < 0:
            raise ConfigError("shadowing_sigma_db must be >= 0")
        if not 0 <= self.fading_correlation < 1:
            raise ConfigError("fading_correlation must lie in [0, 1)")


@dataclass(frozen=True)
class LinkGainSeries:
    link: LinkSpec
    gains: np.ndarray  # complex amplitude per slot

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.gains) ** 2


def node_id(role: str, index: int) -> str:
    """Node names look like ``PUT0``, ``PUR0``, ``SUT2``, ``SUR2``."""
    return f"{role}{index}"


@dataclass
class Geometry:
    """Transmitter/receiver placement of every user and the enumerated link set.

    Users are numbered PUs first (``0..M-1``) then SUs (``M..M+N-1``). PU ``m``
    owns channel ``m``.
    """

    num_pus: int
    num_sus: int
    tx_xy: np.ndarray
    rx_xy: np.ndarray
    links: list[LinkSpec]
    # link_matrix[i, j]: link from user i's TX to user j's RX, -1 if not modelled
    link_matrix: np.ndarray
    # sensing_matrix[m, n]: link from PU m's TX to SU n's TX
    sensing_matrix: np.ndarray

    @property
    def num_users(self) -> int:
        return self.num_pus + self.num_sus

    def user_name(self, u: int) -> tuple[str, int]:
        return ("PU", u) if u < self.num_pus else ("SU", u - self.num_pus)

    @property
    def positions(self) -> dict[str, NodePosition]:
        out = {}
        for u in range(self.num_users):
            role, i = self.user_name(u)
            out[node_id(role + "T", i)] = NodePosition(*map(float, self.tx_xy[u]))
            out[node_id(role + "R", i)] = NodePosition(*map(float, self.rx_xy[u]))
        return out

    def link_distance(self, link: LinkSpec) -> float:
        pos = self.positions
        a, b = pos[link.tx_node], pos[link.rx_node]
        return float(np.hypot(a.x - b.x, a.y - b.y))

    def distances(self) -> np.ndarray:
        pos = self.positions
        return np.array(
            [np.hypot(pos[l.tx_node].x - pos[l.rx_node].x, pos[l.tx_node].y - pos[l.rx_node].y) for l in self.links]
        )


def expected_link_count(num_pus: int, num_sus: int) -> int:
    m, n = num_pus, num_sus
    return (m + n) + n * (n - 1) + 3 * m * n


def _place_pair(rng: np.random.Generator, scenario: ScenarioConfig, max_tries: int = 10_000):
    side = scenario.area_m
    for _ in range(max_tries):
        tx = rng.uniform(0.0, side, size=2)
        d = rng.uniform(scenario.pair_distance_min_m, scenario.pair_distance_max_m)
        phi = rng.uniform(0.0, 2 * np.pi)
        rx = tx + d * np.array([np.cos(phi), np.sin(phi)])
        if np.all((rx >= 0) & (rx <= side)):
            return tx, rx
    raise ConfigError("could not place a user pair inside the area")


def build_geometry(scenario: ScenarioConfig, rng_seed: int) -> Geometry:
    """Place every user pair at random and enumerate all links the simulator needs."""
    m, n = scenario.num_pus, scenario.num_sus
    rng = np.random.default_rng([rng_seed, 0x6E0])
    tx_xy = np.empty((m + n, 2))
    rx_xy = np.empty((m + n, 2))
    for u in range(m + n):
        tx_xy[u], rx_xy[u] = _place_pair(rng, scenario)

    def tname(u):
        return node_id("PUT", u) if u < m else node_id("SUT", u - m)

    def rname(u):
        return node_id("PUR", u) if u < m else node_id("SUR", u - m)

    links: list[LinkSpec] = []
    link_matrix = np.full((m + n, m + n), -1, dtype=np.int64)
    sensing_matrix = np.full((m, n), -1, dtype=np.int64)

    def add(tx_node, rx_node, kind):
        links.append(LinkSpec(len(links), tx_node, rx_node, kind))
        return len(links) - 1

    for u in range(m + n):
        link_matrix[u, u] = add(tname(u), rname(u), LinkKind.DESIRED)
    for i in range(m, m + n):
        for j in range(m, m + n):
            if i != j:
                link_matrix[i, j] = add(tname(i), rname(j), LinkKind.SU_SU_INTERFERENCE)
    for i in range(m, m + n):
        for p in range(m):
            link_matrix[i, p] = add(tname(i), rname(p), LinkKind.SUT_TO_PUR)
    for p in range(m):
        for j in range(m, m + n):
            link_matrix[p, j] = add(tname(p), rname(j), LinkKind.PUT_TO_SUR)
    for p in range(m):
        for s in range(n):
            sensing_matrix[p, s] = add(tname(p), node_id("SUT", s), LinkKind.SENSING)

    return Geometry(m, n, tx_xy, rx_xy, links, link_matrix, sensing_matrix)


def path_loss(distance_m, config: ChannelModelConfig):
    """Linear power gain of the log-distance model (<= 1 beyond 1 m)."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss needs a strictly positive distance")
    loss_db = config.reference_loss_db + 10.0 * config.path_loss_exponent * np.log10(d)
    return 10.0 ** (-loss_db / 10.0)


class FadingStream:
    """Forward-only generator of one link's complex gain series.

    Drawing ``n1`` then ``n2`` slots yields exactly the same numbers as drawing
    ``n1 + n2`` slots at once.
    """

    def __init__(self, link: LinkSpec, distance_m: float, config: ChannelModelConfig):
        if distance_m <= 0:
            raise ValueError(f"link {link.index} ({link.tx_node}->{link.rx_node}) has zero length")
        self.link = link
        self.config = config
        self._rng = np.random.default_rng([config.seed, link.index])
        shadow_db = config.shadowing_sigma_db * self._rng.standard_normal()
        self.mean_power = float(path_loss(distance_m, config)) * 10.0 ** (shadow_db / 10.0)
        self._amplitude = np.sqrt(self.mean_power)
        rho = config.fading_correlation
        self._b = np.array([np.sqrt(1.0 - rho * rho)])
        self._a = np.array([1.0, -rho])
        self._zi = None  # filter state, None until the first slot is drawn
        self.position = 0

    def _complex_normal(self, n: int) -> np.ndarray:
        w = self._rng.standard_normal((n, 2))
        return (w[:, 0] + 1j * w[:, 1]) / np.sqrt(2.0)

    def draw(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.empty(0, dtype=complex)
        if not self.config.fading:
            f = np.ones(n, dtype=complex)
        else:
            w = self._complex_normal(n)
            head = w[:0]
            if self._zi is None:
                head, w = w[:1], w[1:]
                self._zi = -self._a[1:] * head
            if w.size:
                rest, self._zi = lfilter(self._b, self._a, w, zi=self._zi)
                f = np.concatenate([head, rest])
            else:
                f = head
        self.position += n
        return self._amplitude * f


def generate_gain_series(
    link: LinkSpec, geometry: Geometry, config: ChannelModelConfig, num_slots: int
) -> LinkGainSeries:
    if num_slots < 1:
        raise ValueError("num_slots must be >= 1")
    stream = FadingStream(link, geometry.link_distance(link), config)
    return LinkGainSeries(link, stream.draw(num_slots))


class ChannelBank:
    """Slot-indexed complex gains of every link, generated lazily in chunks.

    Requests must move forward in time; slots older than the current request
    are discarded.
    """

    def __init__(self, geometry: Geometry, config: ChannelModelConfig, chunk_slots: int = 4096):
        self.geometry = geometry
        self.config = config
        self.chunk_slots = chunk_slots
        dist = geometry.distances()
        self.streams = [FadingStream(l, d, config) for l, d in zip(geometry.links, dist)]
        self._buf = np.empty((len(self.streams), 0), dtype=complex)
        self._start = 0

    @property
    def _end(self) -> int:
        return self._start + self._buf.shape[1]

    def gains(self, start: int, stop: int) -> np.ndarray:
        """Complex gains, shape ``(num_links, stop - start)``."""
        if start < self._start:
            raise ValueError(f"slot {start} already discarded (window starts at {self._start})")
        if stop > self._end:
            n = max(stop - self._end, self.chunk_slots)
            fresh = np.stack([s.draw(n) for s in self.streams])
            keep = self._buf[:, start - self._start :]
            self._buf = np.concatenate([keep, fresh], axis=1)
            self._start = start
        i0 = start - self._start
        return self._buf[:, i0 : i0 + (stop - start)]


def export_geometry_csv(geometry: Geometry, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["link_id", "tx_node", "rx_node", "kind", "distance_m"])
        for link, d in zip(geometry.links, geometry.distances()):
            w.writerow([link.index, link.tx_node, link.rx_node, link.kind.value, repr(float(d))])


def export_gains_csv(series: list[LinkGainSeries], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["link_id", "t", "re", "im"])
        for s in series:
            for t, g in enumerate(s.gains):
                w.writerow([s.link.index, t, repr(float(g.real)), repr(float(g.imag))])
