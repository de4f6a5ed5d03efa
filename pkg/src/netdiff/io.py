"""CSV readers and writers.

Formats (UTF-8, LF, header row required):

* networks  ``village,src,dst``   one undirected edge per row; a row with an
  empty ``dst`` only declares agent ``src`` (used for isolated agents)
* IPs       ``village,agent``
* outcomes  ``village,agent,t,y``  t = 1..T, y in {0, 1}
* info      ``village,agent,t,s``  t = 1..T-1 (debug export)
"""

from __future__ import annotations

import csv
import os
import sys
from collections import defaultdict

import numpy as np

from .graph import NetworkError, VillageNetwork, build_network, compute_reach
from .simulate import OutcomePanel, Sample, Village

NETWORK_HEADER = ["village", "src", "dst"]
IP_HEADER = ["village", "agent"]
OUTCOME_HEADER = ["village", "agent", "t", "y"]
INFO_HEADER = ["village", "agent", "t", "s"]


class SchemaError(ValueError):
    def __init__(self, path, line, message):
        self.path, self.line = path, line
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")


def fmt(x) -> str:
    """Numbers at 17 significant digits; integers verbatim."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else str(x)


def write_csv(path, header, rows) -> None:
    """Write to ``path``; ``None`` or ``"-"`` means stdout."""
    if path in (None, "-"):
        _write_rows(sys.stdout, header, rows)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_rows(fh, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])


def _read_rows(path, header):
    if not os.path.exists(path):
        raise SchemaError(path, 0, "file not found")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise SchemaError(path, 1, "empty file") from None
        if [c.strip() for c in first] != header:
            raise SchemaError(path, 1, f"expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def _int(path, lineno, value, name, allow_empty=False):
    if allow_empty and value == "":
        return None
    try:
        out = int(value)
    except ValueError:
        raise SchemaError(path, lineno, f"{name} must be an integer, got {value!r}") from None
    if out < 0:
        raise SchemaError(path, lineno, f"{name} must be non-negative, got {out}")
    return out


def _read_network_tables(net_path, ip_path):
    edges = defaultdict(list)
    size = defaultdict(int)
    for lineno, (v, s, d) in _read_rows(net_path, NETWORK_HEADER):
        v = _int(net_path, lineno, v, "village")
        s = _int(net_path, lineno, s, "src")
        d = _int(net_path, lineno, d, "dst", allow_empty=True)
        if d is not None and s == d:
            raise SchemaError(net_path, lineno, f"self-loop at agent {s}")
        size[v] = max(size[v], s + 1, (d or 0) + 1)
        if d is not None:
            edges[v].append((s, d))
        else:
            edges[v]  # declares the village
    ips = defaultdict(set)
    for lineno, (v, a) in _read_rows(ip_path, IP_HEADER):
        v = _int(ip_path, lineno, v, "village")
        a = _int(ip_path, lineno, a, "agent")
        if v not in edges:
            raise SchemaError(ip_path, lineno, f"village {v} not present in {net_path}")
        if a >= size[v]:
            raise SchemaError(ip_path, lineno, f"IP {a} not an agent of village {v}")
        ips[v].add(a)
    return edges, size, ips


def read_networks(net_path, ip_path) -> list[VillageNetwork]:
    edges, size, ips = _read_network_tables(net_path, ip_path)
    nets = []
    for v in sorted(edges):
        if not ips[v]:
            raise SchemaError(ip_path, 0, f"village {v} has no IPs")
        try:
            nets.append(build_network(edges[v], size[v], ips[v], village_id=v))
        except NetworkError as exc:
            raise SchemaError(net_path, 0, str(exc)) from exc
    return nets


def read_outcomes(path, sizes: dict) -> tuple[dict, int]:
    """Outcome panels keyed by village; missing cells hold -1."""
    cells = defaultdict(dict)
    T = 0
    for lineno, (v, a, t, y) in _read_rows(path, OUTCOME_HEADER):
        v = _int(path, lineno, v, "village")
        a = _int(path, lineno, a, "agent")
        t = _int(path, lineno, t, "t")
        y = _int(path, lineno, y, "y")
        if v not in sizes:
            raise SchemaError(path, lineno, f"village {v} missing from networks")
        if a >= sizes[v]:
            raise SchemaError(path, lineno, f"agent {a} absent from network of village {v}")
        if t < 1:
            raise SchemaError(path, lineno, f"period must start at 1, got {t}")
        if y not in (0, 1):
            raise SchemaError(path, lineno, f"y must be 0 or 1, got {y}")
        if (a, t) in cells[v]:
            raise SchemaError(path, lineno, f"duplicate outcome for agent {a}, t={t}")
        cells[v][(a, t)] = y
        T = max(T, t)
    if T < 2:
        raise SchemaError(path, 0, "outcomes must cover at least periods 1..2")
    panels = {}
    for v, cell in cells.items():
        y = np.full((sizes[v], T), -1, dtype=np.int8)
        agents = defaultdict(set)
        for (a, t), val in cell.items():
            y[a, t - 1] = val
            agents[a].add(t)
        for a, ts in agents.items():
            if ts != set(range(1, T + 1)):
                raise SchemaError(path, 0, f"village {v}, agent {a}: outcomes must cover t=1..{T}")
        panels[v] = y
    return panels, T


def load_sample(network_file, ip_file, outcome_file) -> Sample:
    nets = read_networks(network_file, ip_file)
    sizes = {n.village_id: n.n_agents for n in nets}
    panels, T = read_outcomes(outcome_file, sizes)
    villages = []
    for net in nets:
        if net.village_id not in panels:
            raise SchemaError(outcome_file, 0, f"no outcomes for village {net.village_id}")
        reach = compute_reach(net, T)
        villages.append(Village(net, reach, OutcomePanel(net.village_id, panels[net.village_id])))
    return Sample(tuple(villages), T)


# --- writers -----------------------------------------------------------------


def network_rows(nets):
    for net in sorted(nets, key=lambda n: n.village_id):
        deg = net.adjacency.sum(axis=1)
        for i, j in net.edges():
            yield (net.village_id, i, j)
        for i in np.flatnonzero(deg == 0):
            yield (net.village_id, int(i), None)


def write_networks(net_path, ip_path, nets) -> None:
    write_csv(net_path, NETWORK_HEADER, network_rows(nets))
    write_csv(ip_path, IP_HEADER, (
        (n.village_id, i) for n in sorted(nets, key=lambda n: n.village_id) for i in sorted(n.ips)
    ))


def write_outcomes(path, sample: Sample) -> None:
    def rows():
        for v in sample.villages:
            y = v.outcome.y
            for i in range(y.shape[0]):
                for t in range(y.shape[1]):
                    yield (v.village_id, i, t + 1, int(y[i, t]))
    write_csv(path, OUTCOME_HEADER, rows())


def write_info(path, sample: Sample) -> None:
    def rows():
        for v in sample.villages:
            if v.info is None:
                continue
            s = v.info.s
            for i in range(s.shape[0]):
                for t in range(s.shape[1]):
                    yield (v.village_id, i, t + 1, int(s[i, t]))
    write_csv(path, INFO_HEADER, rows())


def surface_rows(sample, method, grid, weights=None) -> list[tuple]:
    """``(p, q, Q)`` on the grid in lexicographic (p, q) order."""
    from .estimation import grid_surface
    from .moments import MomentModel

    surf = grid_surface(MomentModel.of(sample), method, grid, weights)  # (q, p)
    return [(float(p), float(q), float(surf[iq, ip]))
            for ip, p in enumerate(grid.p) for iq, q in enumerate(grid.q)]


def export_surface(sample, method, grid, path, weights=None) -> list[tuple]:
    rows = surface_rows(sample, method, grid, weights)
    write_csv(path, ["p", "q", "Q"], rows)
    return rows
