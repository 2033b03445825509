"""Directed stream networks and the tail-up spatial covariance.

A network is a forest of stream segments; each segment points at the
segment it flows into (its downstream neighbor) and carries a length and a
flow weight. Weights are the fraction of flow each branch contributes at a
confluence: the children of every segment sum to 1, and roots carry 1.
Monitored locations sit on a segment at an offset measured from the
segment's downstream end.

Covariance between two locations follows the tail-up construction: zero
unless the locations are flow-connected (water from one passes the other),
otherwise a base correlation of the stream distance scaled by the variance
parameter and the product of the square roots of the branch weights
strictly between the sites.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import NoPathError, ParameterDomainError
from .spatial import SpatialModel, correlation

_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Segment:
    id: int
    downstream: int | None  # None at a root (outlet) segment
    length: float
    weight: float


@dataclass(frozen=True)
class Location:
    id: int
    segment: int
    offset: float  # distance from the segment's downstream end


@dataclass(frozen=True)
class TailUpParams:
    """Variance (zeta1), range (zeta2) and nugget of the tail-up model."""

    zeta1: float
    zeta2: float
    nugget: float = 0.0
    base_correlation: SpatialModel = SpatialModel("exponential", 1.0)

    def __post_init__(self):
        if self.zeta1 <= 0:
            raise ParameterDomainError("zeta1 must be positive")
        if self.zeta2 <= 0:
            raise ParameterDomainError("zeta2 must be positive")
        if self.nugget < 0:
            raise ParameterDomainError("nugget must be nonnegative")


class StreamNetwork:
    """Immutable stream-segment forest with monitored locations."""

    def __init__(self, segments: list[Segment], locations: list[Location]):
        self.segments = {s.id: s for s in segments}
        if len(self.segments) != len(segments):
            raise ParameterDomainError("duplicate segment ids")
        self.locations = list(locations)
        self._children: dict[int, list[int]] = {sid: [] for sid in self.segments}
        self._validate()

    def _validate(self):
        for seg in self.segments.values():
            if seg.length <= 0:
                raise ParameterDomainError(f"segment {seg.id} has nonpositive length")
            if not 0.0 < seg.weight <= 1.0:
                raise ParameterDomainError(
                    f"segment {seg.id} weight {seg.weight} outside (0, 1]"
                )
            if seg.downstream is not None:
                if seg.downstream not in self.segments:
                    raise ParameterDomainError(
                        f"segment {seg.id} flows into unknown segment {seg.downstream}"
                    )
                self._children[seg.downstream].append(seg.id)
        # downstream pointers must form a forest
        for seg in self.segments.values():
            seen = {seg.id}
            cur = seg.downstream
            while cur is not None:
                if cur in seen:
                    raise ParameterDomainError(
                        f"cycle in downstream relation through segment {cur}"
                    )
                seen.add(cur)
                cur = self.segments[cur].downstream
        for sid, seg in self.segments.items():
            if seg.downstream is None and abs(seg.weight - 1.0) > _WEIGHT_SUM_TOL:
                raise ParameterDomainError(f"root segment {sid} must have weight 1")
        for sid, kids in self._children.items():
            if kids:
                total = sum(self.segments[k].weight for k in kids)
                if abs(total - 1.0) > _WEIGHT_SUM_TOL:
                    raise ParameterDomainError(
                        f"split weights upstream of segment {sid} sum to {total}, not 1"
                    )
        for loc in self.locations:
            if loc.segment not in self.segments:
                raise ParameterDomainError(
                    f"location {loc.id} sits on unknown segment {loc.segment}"
                )
            if not 0.0 <= loc.offset <= self.segments[loc.segment].length:
                raise ParameterDomainError(
                    f"location {loc.id} offset {loc.offset} outside its segment"
                )

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    def _location(self, j: int) -> Location:
        try:
            return self.locations[j]
        except IndexError:
            raise IndexError(f"no location with index {j}") from None

    def _ancestors(self, sid: int) -> list[int]:
        out = []
        cur = self.segments[sid].downstream
        while cur is not None:
            out.append(cur)
            cur = self.segments[cur].downstream
        return out

    def downstream_set(self, j: int) -> frozenset[int]:
        """Segments the water from location j flows through, its own included."""
        sid = self._location(j).segment
        return frozenset([sid, *self._ancestors(sid)])

    def flow_connected(self, j: int, k: int) -> bool:
        """True when one location's downstream set contains the other's."""
        dj, dk = self.downstream_set(j), self.downstream_set(k)
        inter = dj & dk
        return inter == dj or inter == dk

    def between_set(self, j: int, k: int) -> frozenset[int]:
        """Segments strictly between two flow-connected locations: the
        upstream site's segment is included, the downstream site's excluded.
        Empty when the pair is not flow-connected."""
        dj, dk = self.downstream_set(j), self.downstream_set(k)
        inter = dj & dk
        if inter != dj and inter != dk:
            return frozenset()
        return (dj | dk) - inter

    def _dist_to_outlet(self, loc: Location) -> float:
        return loc.offset + sum(self.segments[s].length for s in self._ancestors(loc.segment))

    def _root_of(self, sid: int) -> int:
        cur = sid
        while self.segments[cur].downstream is not None:
            cur = self.segments[cur].downstream
        return cur

    def stream_distance(self, j: int, k: int) -> float:
        """Length of the along-network path between two locations.

        For flow-connected pairs this is the flow path; otherwise the tree
        path through the junction where their downstream traces merge.
        """
        lj, lk = self._location(j), self._location(k)
        if self._root_of(lj.segment) != self._root_of(lk.segment):
            raise NoPathError(
                f"locations {j} and {k} lie in disconnected network components"
            )
        dj = self._dist_to_outlet(lj)
        dk = self._dist_to_outlet(lk)
        path_j = [lj.segment, *self._ancestors(lj.segment)]
        set_k = set([lk.segment, *self._ancestors(lk.segment)])
        if lj.segment in set_k or lk.segment in set(path_j):
            return abs(dj - dk)
        # first common segment of the two downstream traces; the traces merge
        # at its upstream junction
        common = next(s for s in path_j if s in set_k)
        merge_depth = self.segments[common].length + sum(
            self.segments[s].length for s in self._ancestors(common)
        )
        return (dj - merge_depth) + (dk - merge_depth)


def tailup_covariance(
    net: StreamNetwork,
    params: TailUpParams,
    base: SpatialModel | None = None,
) -> np.ndarray:
    """Tail-up covariance matrix over the network's locations.

    Entry (j, k) is zero for pairs that are not flow-connected,
    zeta1 + nugget on the diagonal, and otherwise
    prod_{i in between} sqrt(w_i) * zeta1 * rho(d(j, k) / zeta2) with the
    base correlation rho (exponential unless overridden).
    """
    base = base or params.base_correlation
    n = net.n_locations
    cov = np.zeros((n, n))
    for j in range(n):
        cov[j, j] = params.nugget + params.zeta1
        for k in range(j + 1, n):
            if not net.flow_connected(j, k):
                continue
            wprod = 1.0
            for sid in net.between_set(j, k):
                wprod *= net.segments[sid].weight
            d = net.stream_distance(j, k)
            val = np.sqrt(wprod) * params.zeta1 * float(correlation(base, d / params.zeta2))
            cov[j, k] = cov[k, j] = val
    return cov


def read_network(segments_path, locations_path) -> StreamNetwork:
    """Load a network from ``segments.csv`` (id,downstream_id,length,weight;
    empty downstream_id at a root) and ``locations.csv`` (id,segment_id,offset)."""
    segments = []
    with open(segments_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "downstream_id", "length", "weight"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ParameterDomainError(
                f"{segments_path} must have header columns id,downstream_id,length,weight"
            )
        for row in reader:
            down = row["downstream_id"].strip()
            segments.append(
                Segment(
                    id=int(row["id"]),
                    downstream=int(down) if down else None,
                    length=float(row["length"]),
                    weight=float(row["weight"]),
                )
            )
    locations = []
    with open(locations_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "segment_id", "offset"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ParameterDomainError(
                f"{locations_path} must have header columns id,segment_id,offset"
            )
        for row in reader:
            locations.append(
                Location(
                    id=int(row["id"]),
                    segment=int(row["segment_id"]),
                    offset=float(row["offset"]),
                )
            )
    locations.sort(key=lambda loc: loc.id)
    return StreamNetwork(segments, locations)


def write_network(net: StreamNetwork, segments_path, locations_path) -> None:
    with open(segments_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "downstream_id", "length", "weight"])
        for seg in sorted(net.segments.values(), key=lambda s: s.id):
            writer.writerow(
                [seg.id, "" if seg.downstream is None else seg.downstream, seg.length, seg.weight]
            )
    with open(locations_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "segment_id", "offset"])
        for loc in net.locations:
            writer.writerow([loc.id, loc.segment, loc.offset])


def random_binary_network(
    n_splits: int,
    n_locations: int,
    seed: int,
    length_range: tuple[float, float] = (0.5, 1.5),
) -> StreamNetwork:
    """Random binary-tree network for experiments.

    Starting from a single root segment, ``n_splits`` randomly chosen leaf
    segments are split in two; split weights are uniform on the simplex
    (Dirichlet(1, 1)) and lengths uniform in ``length_range``. Locations are
    placed on random segments at random offsets.
    """
    rng = np.random.default_rng(seed)
    lo, hi = length_range
    segments = {1: Segment(1, None, float(rng.uniform(lo, hi)), 1.0)}
    leaves = [1]
    next_id = 2
    for _ in range(n_splits):
        parent = int(rng.choice(leaves))
        leaves.remove(parent)
        w = float(rng.dirichlet([1.0, 1.0])[0])
        for weight in (w, 1.0 - w):
            segments[next_id] = Segment(
                next_id, parent, float(rng.uniform(lo, hi)), weight
            )
            leaves.append(next_id)
            next_id += 1
    seg_ids = list(segments)
    locations = []
    for i in range(n_locations):
        sid = int(rng.choice(seg_ids))
        locations.append(
            Location(id=i, segment=sid, offset=float(rng.uniform(0, segments[sid].length)))
        )
    return StreamNetwork(list(segments.values()), locations)
