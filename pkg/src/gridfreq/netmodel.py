"""Network cases: loading, validation, Laplacian construction and Kron reduction.

A case is a set of buses (each with a generator and an optional rating
``f_i``) connected by lossless lines.  The linearised power flow around the
equilibrium angles gives the weighted Laplacian used everywhere else.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ParseError, SingularBlockError, ValidationError

ANGLE_SLACK = 1e-9
KRON_RCOND_MIN = 1e-12
RATING_MODES = ("mean", "max", "inertia")


@dataclass(frozen=True)
class GeneratorParams:
    m: float
    d: float
    tau: float
    r_t_inv: float = 0.0
    deadband: float = 0.0

    def __post_init__(self):
        for name in ("m", "d", "tau"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"generator parameter {name} must be positive, got {getattr(self, name)}")
        for name in ("r_t_inv", "deadband"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"generator parameter {name} must be nonnegative, got {getattr(self, name)}")


@dataclass(frozen=True)
class Bus:
    id: int
    gen: GeneratorParams
    voltage_mag: float = 1.0
    angle0: float = 0.0
    rating: float | None = None

    def __post_init__(self):
        if not self.voltage_mag > 0:
            raise ValidationError(f"bus {self.id}: voltage_mag must be positive")
        if self.rating is not None and not self.rating > 0:
            raise ValidationError(f"bus {self.id}: rating must be positive")


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ValidationError(f"line {self.from_bus}-{self.to_bus}: self loop")
        if not self.susceptance > 0:
            raise ValidationError(f"line {self.from_bus}-{self.to_bus}: susceptance must be positive")


@dataclass(frozen=True)
class RepresentativeParams:
    """Representative generator and inverter (one row of Table-I style data).

    ``r_t`` and ``r_r`` are droop coefficients; use ``math.inf`` to switch a
    droop off.
    """

    m: float
    d: float
    tau: float
    r_t: float
    r_r: float

    def __post_init__(self):
        for name in ("m", "d", "tau", "r_t", "r_r"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"representative parameter {name} must be positive")

    @property
    def r_t_inv(self) -> float:
        return 0.0 if math.isinf(self.r_t) else 1.0 / self.r_t

    @property
    def r_r_inv(self) -> float:
        return 0.0 if math.isinf(self.r_r) else 1.0 / self.r_r

    @classmethod
    def from_inverse(cls, m, d, tau, r_t_inv, r_r_inv) -> "RepresentativeParams":
        return cls(m, d, tau,
                   math.inf if r_t_inv == 0 else 1.0 / r_t_inv,
                   math.inf if r_r_inv == 0 else 1.0 / r_r_inv)


# Low-inertia representative machine: light damping, slow turbine, equal turbine and inverter droop.
REFERENCE_PARAMS = RepresentativeParams(m=0.0111, d=0.0014, tau=4.59, r_t=748.97, r_r=748.97)
# Stiffer turbine droop for which the Nadir-eliminating iDroop gain r_r_inv + r_t_inv is about 0.004.
REFERENCE_SW_R_T = 374.49


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    representative: RepresentativeParams
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        index = {}
        for pos, bus in enumerate(self.buses):
            if bus.id in index:
                raise ValidationError(f"duplicate bus id {bus.id}")
            index[bus.id] = pos
        object.__setattr__(self, "index", index)
        if not self.buses:
            raise ValidationError("case has no buses")
        seen = set()
        for line in self.lines:
            for end in (line.from_bus, line.to_bus):
                if end not in index:
                    raise ValidationError(f"line endpoint {end} does not exist")
            pair = frozenset((line.from_bus, line.to_bus))
            if pair in seen:
                raise ValidationError(f"duplicate line {line.from_bus}-{line.to_bus}")
            seen.add(pair)
        if len(self.buses) > 1:
            rows = [index[l.from_bus] for l in self.lines]
            cols = [index[l.to_bus] for l in self.lines]
            adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
            ncomp, _ = connected_components(adj, directed=False)
            if ncomp != 1:
                raise ValidationError(f"graph not connected ({ncomp} components)")

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def _gen(self, name):
        return np.array([getattr(b.gen, name) for b in self.buses], dtype=float)

    @property
    def m(self) -> np.ndarray:
        return self._gen("m")

    @property
    def d(self) -> np.ndarray:
        return self._gen("d")

    @property
    def tau(self) -> np.ndarray:
        return self._gen("tau")

    @property
    def r_t_inv(self) -> np.ndarray:
        return self._gen("r_t_inv")

    @property
    def deadband(self) -> np.ndarray:
        return self._gen("deadband")

    @property
    def ratings(self) -> np.ndarray:
        if any(b.rating is None for b in self.buses):
            raise ValidationError("case has buses without rating; call with_default_ratings()")
        return np.array([b.rating for b in self.buses], dtype=float)

    def with_default_ratings(self, mode: str = "mean") -> "NetworkCase":
        """Fill missing ratings with the inertia-proportional default."""
        f = proportionality_ratings(self.m, mode)
        buses = [b if b.rating is not None else replace(b, rating=float(fi))
                 for b, fi in zip(self.buses, f)]
        return replace(self, buses=tuple(buses))

    def with_deadband(self, deadband: float) -> "NetworkCase":
        buses = [replace(b, gen=replace(b.gen, deadband=deadband)) for b in self.buses]
        return replace(self, buses=tuple(buses))

    def with_turbine_scale(self, factor: float) -> "NetworkCase":
        buses = [replace(b, gen=replace(b.gen, r_t_inv=b.gen.r_t_inv * factor)) for b in self.buses]
        return replace(self, buses=tuple(buses))


def proportionality_ratings(m: np.ndarray, mode: str = "mean") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if mode == "mean":
        return m / m.mean()
    if mode == "max":
        return m / m.max()
    if mode == "inertia":
        return m.copy()
    raise ValueError(f"unknown rating mode {mode!r}; expected one of {RATING_MODES}")


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def _number(obj: dict, key: str, where: str, default=None) -> float:
    if key not in obj:
        if default is not None:
            return default
        raise ParseError(f"{where}: missing field {key!r}")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if isinstance(value, str) and value.lower() in ("inf", "infinity"):
            return math.inf
        raise ParseError(f"{where}: field {key!r} is not a number")
    return float(value)


def case_from_dict(doc: dict, rating_mode: str = "mean") -> NetworkCase:
    if not isinstance(doc, dict):
        raise ParseError("case document must be a JSON object")
    for key in ("representative", "buses", "lines"):
        if key not in doc:
            raise ParseError(f"missing top-level key {key!r}")
    rep_doc = doc["representative"]
    if not isinstance(rep_doc, dict):
        raise ParseError("representative must be an object")
    rep = RepresentativeParams(*(_number(rep_doc, k, "representative") for k in ("m", "d", "tau", "r_t", "r_r")))

    if not isinstance(doc["buses"], list) or not isinstance(doc["lines"], list):
        raise ParseError("buses and lines must be arrays")
    buses = []
    for k, b in enumerate(doc["buses"]):
        if not isinstance(b, dict):
            raise ParseError(f"buses[{k}] must be an object")
        if "id" not in b or isinstance(b["id"], bool) or not isinstance(b["id"], int):
            raise ParseError(f"buses[{k}]: integer field 'id' required")
        where = f"bus {b['id']}"
        gen = GeneratorParams(
            m=_number(b, "m", where), d=_number(b, "d", where), tau=_number(b, "tau", where),
            r_t_inv=_number(b, "r_t_inv", where), deadband=_number(b, "deadband", where, default=0.0))
        rating = _number(b, "rating", where) if b.get("rating") is not None else None
        buses.append(Bus(id=b["id"], gen=gen,
                         voltage_mag=_number(b, "voltage_mag", where, default=1.0),
                         angle0=_number(b, "angle0", where, default=0.0),
                         rating=rating))
    lines = []
    for k, l in enumerate(doc["lines"]):
        if not isinstance(l, dict):
            raise ParseError(f"lines[{k}] must be an object")
        for key in ("from", "to"):
            if key not in l or isinstance(l[key], bool) or not isinstance(l[key], int):
                raise ParseError(f"lines[{k}]: integer field {key!r} required")
        lines.append(Line(l["from"], l["to"], _number(l, "susceptance", f"lines[{k}]")))
    case = NetworkCase(tuple(buses), tuple(lines), rep)
    return case.with_default_ratings(rating_mode)


def load_case(path, rating_mode: str = "mean") -> NetworkCase:
    """Read and validate a JSON case file.

    Buses without a ``rating`` get ``f_i = m_i / mean(m)`` (or the variant
    selected by ``rating_mode``).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return case_from_dict(doc, rating_mode)


def case_to_dict(case: NetworkCase) -> dict:
    rep = case.representative
    return {
        "representative": {"m": rep.m, "d": rep.d, "tau": rep.tau, "r_t": rep.r_t, "r_r": rep.r_r},
        "buses": [
            {"id": b.id, "voltage_mag": b.voltage_mag, "angle0": b.angle0,
             "m": b.gen.m, "d": b.gen.d, "tau": b.gen.tau, "r_t_inv": b.gen.r_t_inv,
             "deadband": b.gen.deadband, "rating": b.rating}
            for b in case.buses
        ],
        "lines": [{"from": l.from_bus, "to": l.to_bus, "susceptance": l.susceptance} for l in case.lines],
    }


def save_case(case: NetworkCase, path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Laplacian
# ---------------------------------------------------------------------------

def build_laplacian(case: NetworkCase) -> np.ndarray:
    """Linearised power-flow Laplacian, rows/columns in ``case.buses`` order.

    Off-diagonal ``L_ij = -|V_i||V_j| b_ij cos(theta_i - theta_j)``.
    """
    n = case.n
    L = np.zeros((n, n))
    for line in case.lines:
        i, j = case.index[line.from_bus], case.index[line.to_bus]
        bi, bj = case.buses[i], case.buses[j]
        dtheta = bi.angle0 - bj.angle0
        if abs(dtheta) > math.pi / 2 - ANGLE_SLACK:
            raise ValidationError(
                f"line {line.from_bus}-{line.to_bus}: equilibrium angle difference {dtheta:.6g} rad not below pi/2")
        w = bi.voltage_mag * bj.voltage_mag * line.susceptance * math.cos(dtheta)
        L[i, j] -= w
        L[j, i] -= w
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def kron_reduce(L: np.ndarray, retained: Iterable[int], bus_ids: Sequence[int] | None = None) -> np.ndarray:
    """Schur complement of ``L`` onto the retained buses.

    ``retained`` holds bus ids when ``bus_ids`` is given, otherwise positional
    indices.  The output keeps the original relative order of retained buses.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if bus_ids is not None:
        pos = {b: k for k, b in enumerate(bus_ids)}
        try:
            keep = sorted(pos[r] for r in set(retained))
        except KeyError as exc:
            raise ValidationError(f"unknown bus id {exc.args[0]}") from None
    else:
        keep = sorted(set(int(r) for r in retained))
        if keep and (keep[0] < 0 or keep[-1] >= n):
            raise ValidationError("retained index out of range")
    if not keep:
        raise ValidationError("retained set is empty")
    if len(keep) == n:
        return L.copy()
    elim = [k for k in range(n) if k not in set(keep)]
    Lrr = L[np.ix_(keep, keep)]
    Lre = L[np.ix_(keep, elim)]
    Lee = L[np.ix_(elim, elim)]
    cond = np.linalg.cond(Lee)
    if not np.isfinite(cond) or 1.0 / cond < KRON_RCOND_MIN:
        raise SingularBlockError(f"eliminated block is singular (condition {cond:.3g})")
    red = Lrr - Lre @ np.linalg.solve(Lee, Lre.T)
    return 0.5 * (red + red.T)


# ---------------------------------------------------------------------------
# proportionality
# ---------------------------------------------------------------------------

def fit_proportionality(case: NetworkCase, mode: str = "mean") -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Ratings ``f_i`` from inertia and the per-bus distance from exact proportionality.

    Returns the diagonal of ``F`` and relative residuals of damping, turbine
    time constant and inverse turbine droop against the case's representative
    parameters.  When the representative inverse droop is zero the residual of
    ``r_t_inv`` is reported in absolute terms.
    """
    f = proportionality_ratings(case.m, mode)
    rep = case.representative
    d_res = np.abs(case.d - f * rep.d) / (f * rep.d)
    tau_res = np.abs(case.tau - rep.tau) / rep.tau
    if rep.r_t_inv > 0:
        rt_res = np.abs(case.r_t_inv - f * rep.r_t_inv) / (f * rep.r_t_inv)
    else:
        rt_res = np.abs(case.r_t_inv)
    return f, {"d": d_res, "tau": tau_res, "r_t_inv": rt_res}


def representative_from_case(case: NetworkCase, d: float | None = None) -> RepresentativeParams:
    """Aggregate representative parameters of a (possibly non-proportional) case.

    Inertia and turbine time constant are plain means, ``r_t`` is
    ``sum(f) / sum(r_t_inv_i)``, damping defaults to ``sum(d_i) / sum(f_i)``.
    The inverter droop is taken from the case's representative block.
    """
    m = float(case.m.mean())
    f = case.m / m
    if d is None:
        d = float(case.d.sum() / f.sum())
    rt_sum = case.r_t_inv.sum()
    r_t = math.inf if rt_sum == 0 else float(f.sum() / rt_sum)
    return RepresentativeParams(m=m, d=d, tau=float(case.tau.mean()), r_t=r_t, r_r=case.representative.r_r)


def make_proportional_case(rep: RepresentativeParams, ratings: Sequence[float],
                           lines: Iterable[tuple[int, int, float]],
                           deadband: float = 0.0, ids: Sequence[int] | None = None) -> NetworkCase:
    """Case whose buses are exact scalings of ``rep`` by ``ratings``."""
    ratings = [float(f) for f in ratings]
    ids = list(ids) if ids is not None else list(range(1, len(ratings) + 1))
    buses = tuple(
        Bus(id=i, rating=f,
            gen=GeneratorParams(m=f * rep.m, d=f * rep.d, tau=rep.tau, r_t_inv=f * rep.r_t_inv, deadband=deadband))
        for i, f in zip(ids, ratings))
    return NetworkCase(buses, tuple(Line(a, b, w) for a, b, w in lines), rep)


def random_connected_lines(n: int, rng: np.random.Generator, extra_prob: float = 0.3,
                           weight_range: tuple[float, float] = (0.5, 2.0),
                           ids: Sequence[int] | None = None) -> list[tuple[int, int, float]]:
    """Random spanning tree plus extra edges with probability ``extra_prob``."""
    ids = list(ids) if ids is not None else list(range(1, n + 1))
    order = rng.permutation(n)
    pairs = set()
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        pairs.add(frozenset((ids[order[k]], ids[parent])))
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < extra_prob:
                pairs.add(frozenset((ids[a], ids[b])))
    out = []
    for pair in sorted(pairs, key=lambda p: tuple(sorted(p))):
        a, b = sorted(pair)
        out.append((a, b, float(rng.uniform(*weight_range))))
    return out
