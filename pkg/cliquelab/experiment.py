"""
Experiment Runner

Reads graphs and matrices from text files, validates an experiment configuration,
runs one algorithm on a fresh clique and returns the result document, and sweeps
node counts for scaling reports. The command-line script is a thin layer over
`run_experiment`.
"""

import csv
import io
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from algebra import (
    BOOLEAN, INF, INTEGERS, MINPLUS, SemiringMatrix, SemiringSpec, is_inf, parse_minplus_entry,
)
from apsp import (
    apsp_approx, apsp_bounded, apsp_diameter, apsp_seidel, apsp_semiring,
)
from config import load_settings
from girth import GirthBound, girth_directed, girth_undirected
from graph_schema import DistanceResult, Graph, WeightMatrix
from matmul import MatmulBackend, mm_bilinear, mm_semiring, power_exponent, strassen
from network import CliqueNetwork
from oracle import (
    MAX_ENUMERATION_NODES, count_kcycles_brute, floyd_warshall, girth_brute, mat_mul_oracle,
)
from subgraph import count_4cycles, count_triangles, detect_4cycle_constant, detect_kcycle
from witness import verify_witnesses, witness_general

logger = logging.getLogger(__name__)

SUBCOMMANDS = (
    "mm", "triangles", "count-c4", "detect-c4", "kcycle", "girth",
    "girth-directed", "apsp", "witness-test", "scaling",
)
APSP_MODES = ("semiring", "seidel", "bounded", "diameter", "approx")
SEMIRINGS = {"boolean": BOOLEAN, "integer": INTEGERS, "minplus": MINPLUS}
SCALING_TARGETS = ("mm-semiring", "mm-bilinear", "triangles", "detect-c4", "broadcast")
DETECTION_COMMANDS = ("detect-c4", "kcycle")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_FOUND = 2


class EdgeListError(ValueError):
    """A malformed edge-list file"""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ==================== CONFIGURATION ====================

class ExperimentConfig(BaseModel):
    """One experiment; every field maps to a command-line flag"""
    model_config = ConfigDict(frozen=True)

    subcommand: str
    input: Optional[Path] = None
    right: Optional[Path] = None
    n: Optional[int] = None
    directed: bool = False
    allow_self_loops: bool = False
    semiring: str = "minplus"
    k: int = 3
    M: Optional[int] = None
    delta: Optional[float] = None
    rho: Optional[float] = None
    loglog_cutoff: bool = False
    mode: str = "semiring"
    seed: Optional[int] = None
    output_format: str = "json"
    backend: str = "auto"
    trials: Optional[int] = None
    witness_c: Optional[float] = None
    target: str = "mm-semiring"
    sizes: List[int] = []
    with_routes: bool = False
    verify: bool = False

    @field_validator("subcommand")
    @classmethod
    def _known_subcommand(cls, value: str) -> str:
        if value not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {value!r}; choose from {', '.join(SUBCOMMANDS)}")
        return value

    @field_validator("mode")
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in APSP_MODES:
            raise ValueError(f"unknown apsp mode {value!r}; choose from {', '.join(APSP_MODES)}")
        return value

    @field_validator("semiring")
    @classmethod
    def _known_semiring(cls, value: str) -> str:
        if value not in SEMIRINGS:
            raise ValueError(f"unknown semiring {value!r}; choose from {', '.join(SEMIRINGS)}")
        return value

    @field_validator("target")
    @classmethod
    def _known_target(cls, value: str) -> str:
        if value not in SCALING_TARGETS:
            raise ValueError(f"unknown scaling target {value!r}; choose from {', '.join(SCALING_TARGETS)}")
        return value

    @field_validator("output_format")
    @classmethod
    def _known_format(cls, value: str) -> str:
        if value not in ("json", "csv"):
            raise ValueError("output format must be json or csv")
        return value

    @field_validator("backend")
    @classmethod
    def _known_backend(cls, value: str) -> str:
        MatmulBackend.parse(value)
        return value

    @field_validator("delta")
    @classmethod
    def _positive_delta(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value <= 0:
            raise ValueError(f"delta must be positive, got {value}")
        return value

    @field_validator("rho")
    @classmethod
    def _rho_range(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not 0 < value <= 1:
            raise ValueError(f"rho must lie in (0, 1], got {value}")
        return value

    @field_validator("k")
    @classmethod
    def _cycle_length(cls, value: int) -> int:
        if value < 3:
            raise ValueError(f"cycle length k must be at least 3, got {value}")
        return value

    @field_validator("M", "n", "trials")
    @classmethod
    def _nonnegative(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 0:
            raise ValueError(f"expected a nonnegative value, got {value}")
        return value

    @model_validator(mode="after")
    def _inputs_present(self) -> "ExperimentConfig":
        needs_input = self.subcommand not in ("witness-test", "scaling")
        if needs_input and self.input is None:
            raise ValueError(f"{self.subcommand} needs --input")
        if self.subcommand == "scaling" and not self.sizes:
            raise ValueError("scaling needs at least one size")
        return self

    @model_validator(mode="after")
    def _self_loops_only_for_directed_girth(self) -> "ExperimentConfig":
        if self.allow_self_loops and self.subcommand != "girth-directed":
            raise ValueError(f"--allow-self-loops only applies to girth-directed, not {self.subcommand}")
        return self

    def resolved_seed(self) -> int:
        return self.seed if self.seed is not None else load_settings().seed


# ==================== INGESTION ====================

def _data_lines(text: str):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line.split()


def parse_edge_list(
    text: str,
    n: Optional[int] = None,
    directed: bool = False,
    allow_self_loops: bool = False,
    weighted: Optional[bool] = None,
) -> Union[Graph, WeightMatrix]:
    """
    One edge per line, "u v" or "u v w", 0-based ids, '#' starts a comment.

    Three-column files give a WeightMatrix, two-column files a Graph (or unit
    weights when weighted=True). A leading "# n=<count>" line fixes the node
    count when n is not given.
    """
    if n is None:
        header = re.match(r"\s*#\s*n\s*=\s*(\d+)", text)
        if header:
            n = int(header.group(1))
    edges: List[Tuple[int, int, Any]] = []
    seen: Dict[Tuple[int, int], int] = {}
    columns: Optional[int] = None
    for number, tokens in _data_lines(text):
        if len(tokens) not in (2, 3):
            raise EdgeListError(number, f"expected 'u v' or 'u v w', got {len(tokens)} fields")
        if columns is None:
            columns = len(tokens)
        elif len(tokens) != columns:
            raise EdgeListError(number, "weighted and unweighted edges are mixed")
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise EdgeListError(number, f"node ids must be integers, got {tokens[0]!r} {tokens[1]!r}") from None
        if u < 0 or v < 0 or (n is not None and (u >= n or v >= n)):
            bound = "" if n is None else f" (n={n})"
            raise EdgeListError(number, f"node id out of range in edge ({u}, {v}){bound}")
        if u == v and not allow_self_loops:
            raise EdgeListError(number, f"self-loop at node {u}")
        key = (u, v) if directed else (min(u, v), max(u, v))
        if key in seen:
            raise EdgeListError(number, f"duplicate edge ({u}, {v}), first given on line {seen[key]}")
        seen[key] = number
        weight: Any = 1
        if len(tokens) == 3:
            try:
                weight = parse_minplus_entry(tokens[2])
            except ValueError as e:
                raise EdgeListError(number, str(e)) from None
        edges.append((u, v, weight))

    size = n if n is not None else 1 + max((max(u, v) for u, v, _ in edges), default=-1)
    if weighted or (weighted is None and columns == 3):
        return WeightMatrix.from_edges(size, edges, directed=directed)
    return Graph.from_edges(
        size, ((u, v) for u, v, _ in edges), directed=directed, allow_self_loops=allow_self_loops
    )


def ingest_edge_list(path: Union[str, Path], **options) -> Union[Graph, WeightMatrix]:
    return parse_edge_list(Path(path).read_text(), **options)


def emit_edge_list(data: Union[Graph, WeightMatrix]) -> str:
    """Inverse of parse_edge_list (node count in a header comment)."""
    lines = [f"# n={data.n}"]
    if isinstance(data, Graph):
        lines += [f"{u} {v}" for u, v in data.edges()]
    else:
        for (u, v), w in np.ndenumerate(data.weights.entries):
            if u == v or is_inf(w) or (not data.directed and u > v):
                continue
            lines.append(f"{u} {v} {int(w)}")
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, semiring: SemiringSpec) -> SemiringMatrix:
    """First line n, then n rows of whitespace-separated entries ("inf" for ∞)."""
    rows = [tokens for _, tokens in _data_lines(text)]
    if not rows or len(rows[0]) != 1:
        raise ValueError("matrix files start with a line holding n")
    n = int(rows[0][0])
    body = rows[1:]
    if len(body) != n or any(len(r) != n for r in body):
        raise ValueError(f"expected {n} rows of {n} entries")
    if semiring == MINPLUS:
        return SemiringMatrix(MINPLUS, [[parse_minplus_entry(x) for x in r] for r in body])
    values = [[int(x) for x in r] for r in body]
    if semiring == BOOLEAN:
        return SemiringMatrix(BOOLEAN, np.array(values) != 0)
    return SemiringMatrix(INTEGERS, values)


def format_matrix(S: SemiringMatrix) -> str:
    rows = [str(S.n)] + [" ".join(str(x) for x in row) for row in S.tolist()]
    return "\n".join(rows) + "\n"


def read_matrix(path: Union[str, Path], semiring: SemiringSpec) -> SemiringMatrix:
    return parse_matrix(Path(path).read_text(), semiring)


# ==================== DISPATCH ====================

def _backend_for(cfg: ExperimentConfig, n: int, ring: bool) -> MatmulBackend:
    chosen = MatmulBackend.parse(cfg.backend)
    if chosen is not None:
        return chosen
    levels = power_exponent(n, 7)
    if ring and levels:
        return MatmulBackend("bilinear", levels)
    return MatmulBackend("semiring3d")


def _network(cfg: ExperimentConfig, n: int, backend: Optional[MatmulBackend], doc: Dict[str, Any]) -> CliqueNetwork:
    size = n if backend is None else backend.clique_size_for(n)
    if size != n:
        logger.info("padding %d nodes to a %d-node clique for %s", n, size, backend.label)
        doc["padding"] = {"n": n, "clique_n": size, "backend": backend.label}
    return CliqueNetwork(size, seed=cfg.resolved_seed())


def _graph(cfg: ExperimentConfig, directed: Optional[bool] = None) -> Graph:
    data = ingest_edge_list(
        cfg.input, n=cfg.n,
        directed=cfg.directed if directed is None else directed,
        allow_self_loops=cfg.allow_self_loops, weighted=False,
    )
    return data


def _weights(cfg: ExperimentConfig) -> WeightMatrix:
    return ingest_edge_list(cfg.input, n=cfg.n, directed=cfg.directed, weighted=True)


def _run_mm(cfg, doc):
    semiring = SEMIRINGS[cfg.semiring]
    S = read_matrix(cfg.input, semiring)
    T = read_matrix(cfg.right, semiring) if cfg.right else S
    backend = _backend_for(cfg, S.n, semiring.is_ring or semiring == BOOLEAN)
    net = _network(cfg, S.n, backend, doc)
    P = backend.multiply(S, T, net).product
    doc["result"] = {"product": P.tolist(), "backend": backend.label}
    if cfg.verify:
        doc["verify"] = {"passed": P == mat_mul_oracle(S, T)}
    return net


def _run_count(cfg, doc, k):
    G = _graph(cfg)
    backend = _backend_for(cfg, G.n, ring=True)
    net = _network(cfg, G.n, backend, doc)
    counter = count_triangles if k == 3 else count_4cycles
    result = counter(G, net, backend)
    doc["result"] = {"count": result.count}
    if cfg.verify and G.n <= MAX_ENUMERATION_NODES:
        expected = count_kcycles_brute(G, k)
        doc["verify"] = {"passed": expected == result.count, "expected": expected}
    return net


def _run_detect_c4(cfg, doc):
    G = _graph(cfg, directed=False)
    net = _network(cfg, G.n, None, doc)
    result = detect_4cycle_constant(G, net)
    doc["result"] = {"found": result.found, "early_exit": result.details["early_exit"]}
    if cfg.verify and G.n <= MAX_ENUMERATION_NODES:
        expected = count_kcycles_brute(G, 4) > 0
        doc["verify"] = {"passed": expected == result.found, "expected": expected}
    return net, result.found


def _run_kcycle(cfg, doc):
    G = _graph(cfg)
    backend = _backend_for(cfg, G.n, ring=True)
    net = _network(cfg, G.n, backend, doc)
    result = detect_kcycle(G, cfg.k, net, seed=cfg.seed, trials=cfg.trials, backend=backend)
    doc["result"] = {"found": result.found, "k": cfg.k, "trials": result.trials}
    if cfg.verify and G.n <= MAX_ENUMERATION_NODES:
        expected = count_kcycles_brute(G, cfg.k) > 0
        # a miss is possible; a false positive is not
        doc["verify"] = {"passed": expected or not result.found, "expected": expected}
    return net, result.found


def _girth_value(g) -> Any:
    return "inf" if g == INF else int(g)


def _run_girth(cfg, doc, directed):
    G = _graph(cfg, directed=directed)
    backend = _backend_for(cfg, G.n, ring=True)
    net = _network(cfg, G.n, backend, doc)
    if directed:
        result = girth_directed(G, net, backend)
    else:
        bound = GirthBound(0.0 if cfg.loglog_cutoff else (cfg.rho or load_settings().rho))
        result = girth_undirected(G, net, bound, seed=cfg.seed, trials=cfg.trials, backend=backend)
    doc["result"] = result.to_dict()
    doc["result"].pop("stats")
    if cfg.verify:
        expected = girth_brute(G)
        doc["verify"] = {"passed": expected == result.girth, "expected": _girth_value(expected)}
    return net


def _sandwich_report(approx: DistanceResult, exact: SemiringMatrix, factor: float) -> Dict[str, Any]:
    worst = 1.0
    ok = True
    for (u, v), d in np.ndenumerate(exact.entries):
        a = approx.distances[u, v]
        if is_inf(d) or is_inf(a):
            ok = ok and is_inf(d) == is_inf(a)
            continue
        if a < d:
            ok = False
        if d > 0:
            worst = max(worst, a / d)
        elif a != 0:
            ok = False
    return {"passed": ok and worst <= factor + 1e-12, "max_ratio": worst, "factor_bound": factor}


def _run_apsp(cfg, doc):
    if cfg.mode == "seidel":
        G = _graph(cfg, directed=False)
        backend = _backend_for(cfg, G.n, ring=True)
        net = _network(cfg, G.n, backend, doc)
        result = apsp_seidel(G, net, backend)
        W = WeightMatrix.from_graph(G)
    else:
        W = _weights(cfg)
        if cfg.mode == "semiring" or (cfg.mode == "approx" and cfg.with_routes):
            backend = MatmulBackend("semiring3d")
        else:
            backend = _backend_for(cfg, W.n, ring=True)
        net = _network(cfg, W.n, backend, doc)
        if cfg.mode == "semiring":
            result = apsp_semiring(W, net, with_routes=True)
        elif cfg.mode == "bounded":
            if cfg.M is None:
                raise ValueError("apsp --mode bounded needs --M")
            result = apsp_bounded(W, cfg.M, net, backend, with_routes=cfg.with_routes)
        elif cfg.mode == "diameter":
            result = apsp_diameter(W, net, backend, with_routes=cfg.with_routes)
        else:
            result = apsp_approx(W, net, cfg.delta, backend, with_routes=cfg.with_routes)

    doc["result"] = result.to_dict()
    doc["result"].pop("stats", None)
    if cfg.output_format == "csv":
        doc["csv"] = result.to_csv()
    if cfg.verify:
        exact = floyd_warshall(W)
        if cfg.mode == "approx":
            doc["verify"] = _sandwich_report(result, exact, result.details["factor_bound"])
        elif cfg.mode == "bounded":
            doc["verify"] = {"passed": result.distances == _bounded_reference(exact, cfg.M)}
        else:
            doc["verify"] = {"passed": result.distances == exact}
    return net


def _bounded_reference(exact: SemiringMatrix, M: int) -> SemiringMatrix:
    out = np.array(exact.entries, dtype=object)
    for index, value in np.ndenumerate(out):
        if not is_inf(value) and value > M:
            out[index] = INF
    return SemiringMatrix.wrap(MINPLUS, out)


def random_minplus(n: int, M: int, rng: np.random.Generator, density: float = 0.6) -> SemiringMatrix:
    values = rng.integers(0, M + 1, size=(n, n)).astype(object)
    values[rng.random((n, n)) >= density] = INF
    return SemiringMatrix(MINPLUS, values)


def _run_witness_test(cfg, doc):
    n = cfg.n or 16
    M = 4 if cfg.M is None else cfg.M
    seed = cfg.resolved_seed()
    rng = np.random.default_rng([seed, n])
    S, T = random_minplus(n, M, rng), random_minplus(n, M, rng)
    backend = MatmulBackend("semiring3d")
    net = _network(cfg, n, backend, doc)

    def product(A: SemiringMatrix, B: SemiringMatrix) -> SemiringMatrix:
        return mm_semiring(A, B, net).product

    P = product(S, T)
    result = witness_general(S, T, P, product, seed=seed, c=cfg.witness_c, net=net)
    invalid = verify_witnesses(S, T, P, result.Q)
    doc["result"] = {
        "n": n,
        "unknown": len(result.unknown),
        "product_calls": result.product_calls,
        "invalid": len(invalid),
    }
    if cfg.verify:
        doc["verify"] = {"passed": not invalid}
    return net


# ==================== SCALING ====================

def _scaling_instance(target: str, n: int, rng: np.random.Generator):
    if target == "mm-semiring":
        return random_minplus(n, 9, rng)
    if target == "mm-bilinear":
        return SemiringMatrix(INTEGERS, rng.integers(-5, 6, size=(n, n)))
    upper = np.triu(rng.random((n, n)) < 0.3, k=1)
    return Graph(n, upper | upper.T)


def scaling_report(
    target: str,
    sizes: List[int],
    trials: int = 1,
    seed: Optional[int] = None,
) -> str:
    """CSV rows (target, n, trial, rounds, max_out, total_words), deterministic per seed."""
    if target not in SCALING_TARGETS:
        raise ValueError(f"unknown scaling target {target!r}")
    seed = load_settings().seed if seed is None else seed
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["target", "n", "trial", "rounds", "max_out", "total_words"])
    for n in sizes:
        if n < 1:
            raise ValueError(f"invalid size {n}")
        for trial in range(trials):
            rng = np.random.default_rng([seed, n, trial])
            instance = _scaling_instance(target, n, rng)
            net = CliqueNetwork(n, seed=seed)
            if target == "mm-semiring":
                mm_semiring(instance, instance, net)
            elif target == "mm-bilinear":
                levels = power_exponent(n, 7)
                if not levels:
                    raise ValueError(f"mm-bilinear needs a power of 7, got {n}")
                mm_bilinear(instance, instance, net, strassen(levels))
            elif target == "triangles":
                count_triangles(instance, net)
            elif target == "detect-c4":
                detect_4cycle_constant(instance, net)
            else:
                with net.phase("broadcast"):
                    net.broadcast_all(list(range(n)))
            stats = net.stats()
            writer.writerow([target, n, trial, stats.rounds_total, stats.max_out, stats.total_words])
    return buffer.getvalue()


# ==================== ENTRY POINT ====================

def run_experiment(cfg: ExperimentConfig) -> Tuple[Dict[str, Any], Dict[str, Any], int]:
    """
    Run one configured experiment.

    Returns (result document, stats document, exit code): 0 on success, 2 when a
    detect command finds nothing. Errors propagate to the caller.
    """
    doc: Dict[str, Any] = {
        "success": True,
        "subcommand": cfg.subcommand,
        "seed": cfg.resolved_seed(),
        "config": cfg.model_dump(mode="json"),
    }
    code = EXIT_OK
    net: Optional[CliqueNetwork] = None

    if cfg.subcommand == "mm":
        net = _run_mm(cfg, doc)
    elif cfg.subcommand == "triangles":
        net = _run_count(cfg, doc, 3)
    elif cfg.subcommand == "count-c4":
        net = _run_count(cfg, doc, 4)
    elif cfg.subcommand == "detect-c4":
        net, found = _run_detect_c4(cfg, doc)
        code = EXIT_OK if found else EXIT_NOT_FOUND
    elif cfg.subcommand == "kcycle":
        net, found = _run_kcycle(cfg, doc)
        code = EXIT_OK if found else EXIT_NOT_FOUND
    elif cfg.subcommand in ("girth", "girth-directed"):
        net = _run_girth(cfg, doc, directed=cfg.subcommand == "girth-directed")
    elif cfg.subcommand == "apsp":
        net = _run_apsp(cfg, doc)
    elif cfg.subcommand == "witness-test":
        net = _run_witness_test(cfg, doc)
    else:
        doc["csv"] = scaling_report(cfg.target, cfg.sizes, cfg.trials or 1, cfg.resolved_seed())

    stats = net.stats().to_dict() if net is not None else {}
    doc["stats"] = stats
    return doc, stats, code


def render_document(doc: Dict[str, Any], output_format: str = "json") -> str:
    """JSON (default) or CSV; CSV is the distance/scaling table when there is one."""
    if output_format == "json":
        return json.dumps({k: v for k, v in doc.items() if k != "csv"}, indent=2, default=str)
    if "csv" in doc:
        return doc["csv"]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["key", "value"])
    for key, value in sorted(doc.get("result", {}).items()):
        writer.writerow([key, value])
    if doc.get("stats"):
        writer.writerow(["rounds_total", doc["stats"]["rounds_total"]])
    return buffer.getvalue()
