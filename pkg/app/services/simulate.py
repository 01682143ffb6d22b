"""Random-graph generators and the simulated classification and survival designs."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import networkx as nx
import numpy as np
from scipy import stats

from app.exceptions import GraphError
from app.models.schemas import DistanceKind, GraphModel, SimDesign, SurvivalCase
from app.services.distances import distance_matrix
from app.services.graphs import Graph
from app.services.seeding import int_seed
from app.services.survival import SurvivalDataset

logger = logging.getLogger(__name__)

# (weight, mean, sd) components per survival case and group
SURVIVAL_CASES: dict[SurvivalCase, dict[int, tuple[tuple[float, float, float], ...]]] = {
    SurvivalCase.EASY: {
        0: ((1.0, 2.0, 0.8),),
        1: ((1.0, 4.0, 1.0),),
    },
    SurvivalCase.HARD: {
        0: ((1.0, 3.0, 0.8),),
        1: ((0.4, 4.0, 1.0), (0.6, 2.0, 0.8)),
    },
}


def _from_networkx(G: nx.Graph, n: int) -> Graph:
    return Graph(nx.to_numpy_array(G, nodelist=range(n), weight=None))


# ============== Graph Generators ==============

def gen_small_world(
    n: int,
    rewire_p: float,
    rng: np.random.Generator,
    radius: int = 2,
) -> Graph:
    """Ring lattice with `radius` neighbours per side, each edge rewired with prob rewire_p."""
    if n < 5:
        raise ValueError(f"small-world graphs need n >= 5, got {n}")
    if not 0.0 <= rewire_p <= 1.0:
        raise ValueError(f"rewire_p must lie in [0, 1], got {rewire_p}")
    return _from_networkx(nx.watts_strogatz_graph(n, 2 * radius, rewire_p, seed=int_seed(rng)), n)


def gen_sbm(n: int, link_matrix: Sequence[Sequence[float]], rng: np.random.Generator) -> Graph:
    """Two equal blocks of n/2 nodes; each dyad Bernoulli with its block-pair probability."""
    if n % 2:
        raise ValueError(f"SBM needs an even node count, got {n}")
    P = np.asarray(link_matrix, dtype=float)
    if P.shape != (2, 2) or not np.array_equal(P, P.T) or np.any((P < 0) | (P > 1)):
        raise ValueError("link matrix must be a symmetric 2x2 matrix of probabilities")
    G = nx.stochastic_block_model([n // 2, n // 2], P.tolist(), seed=int_seed(rng))
    return _from_networkx(G, n)


def gen_er(n: int, p: float, rng: np.random.Generator) -> Graph:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    return _from_networkx(nx.gnp_random_graph(n, p, seed=int_seed(rng)), n)


def gen_corr_er(base: Graph, retain_rho: float, rng: np.random.Generator) -> Graph:
    """Keep each edge of a binary parent independently with probability retain_rho."""
    if not base.is_binary:
        raise GraphError("correlated ER needs a binary parent graph")
    if not 0.0 <= retain_rho <= 1.0:
        raise ValueError(f"retain_rho must lie in [0, 1], got {retain_rho}")
    keep = np.triu(rng.uniform(size=base.weights.shape) < retain_rho, k=1)
    upper = np.triu(base.weights, k=1) * keep
    return Graph(upper + upper.T)


def gen_pref_attach(n: int, power: float, rng: np.random.Generator) -> Graph:
    """
    Sequential attachment, one edge per arriving node.

    Node v attaches to an earlier node u with probability proportional to
    degree(u)^power + 1, so the result is always a tree.
    """
    if n < 2:
        raise ValueError(f"preferential attachment needs n >= 2, got {n}")
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    W = np.zeros((n, n))
    degree = np.zeros(n)
    for v in range(1, n):
        weights = degree[:v] ** power + 1.0
        u = rng.choice(v, p=weights / weights.sum())
        W[u, v] = W[v, u] = 1.0
        degree[u] += 1
        degree[v] += 1
    return Graph(W)


# ============== Simulated Designs ==============

@dataclass
class SimulatedClassification:
    graphs: list[Graph]
    labels: np.ndarray


@dataclass
class SimulatedSurvival:
    """Graphs, event times and group (0/1) for a simulated survival case."""
    graphs: list[Graph]
    times: np.ndarray
    groups: np.ndarray
    case: SurvivalCase

    def dataset(self, kind: DistanceKind = DistanceKind.SPECTRAL_NORMALIZED) -> SurvivalDataset:
        return SurvivalDataset(
            times=self.times,
            distances=distance_matrix(self.graphs, kind),
            groups=self.groups,
        )


def class_sizes(m: int, minority_fraction: Optional[float] = None) -> tuple[int, int]:
    """(count of -1, count of +1); with a minority fraction, -1 is the minority class."""
    if minority_fraction is None:
        if m % 2:
            raise ValueError(f"two-class designs need an even m, got {m}")
        return m // 2, m // 2
    minority = min(max(1, int(round(m * minority_fraction))), m - 1)
    return minority, m - minority


def _class_generators(design: SimDesign, rng: np.random.Generator) -> dict[int, Callable[[], Graph]]:
    n = design.n
    model = design.model
    if model is GraphModel.SMALL_WORLD:
        return {
            -1: lambda: gen_small_world(n, design.rewire_p0, rng, design.lattice_radius),
            1: lambda: gen_small_world(n, design.rewire_p1, rng, design.lattice_radius),
        }
    if model is GraphModel.SBM:
        return {-1: lambda: gen_sbm(n, design.sbm_link0, rng), 1: lambda: gen_sbm(n, design.sbm_link1, rng)}
    if model is GraphModel.CORR_ER:
        parents = {-1: gen_er(n, design.er_parent_p, rng), 1: gen_er(n, design.er_parent_p, rng)}
        return {
            -1: lambda: gen_corr_er(parents[-1], design.corr_rho, rng),
            1: lambda: gen_corr_er(parents[1], design.corr_rho, rng),
        }
    if model is GraphModel.PREF_ATTACH:
        return {
            -1: lambda: gen_pref_attach(n, design.pa_power0, rng),
            1: lambda: gen_pref_attach(n, design.pa_power1, rng),
        }
    if model is GraphModel.ER:
        return {-1: lambda: gen_er(n, design.er_p0, rng), 1: lambda: gen_er(n, design.er_p1, rng)}
    raise ValueError(
        "ERGM generation is not supported; simulate small-world, sbm, corr-er, "
        "pref-attach or er designs instead"
    )


def simulate_classification(design: SimDesign, rng: np.random.Generator) -> SimulatedClassification:
    """Class -1 graphs first, then class +1, each from its class's generator."""
    generators = _class_generators(design, rng)
    n_neg, n_pos = class_sizes(design.m, design.minority_fraction)
    graphs = [generators[-1]() for _ in range(n_neg)] + [generators[1]() for _ in range(n_pos)]
    labels = np.concatenate([-np.ones(n_neg), np.ones(n_pos)])
    logger.info(
        f"Simulated {design.model.value} design: {n_neg} class -1 and {n_pos} class +1 "
        f"graphs on {design.n} nodes"
    )
    return SimulatedClassification(graphs, labels)


def _positive_draws(
    components: tuple[tuple[float, float, float], ...],
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mixture draws restricted to (0, inf) by rejection."""
    weights = np.array([c[0] for c in components])
    out = np.empty(0)
    while out.size < size:
        k = rng.choice(len(components), size=size, p=weights / weights.sum())
        means = np.array([components[j][1] for j in k])
        sds = np.array([components[j][2] for j in k])
        draws = rng.normal(means, sds)
        out = np.concatenate([out, draws[draws > 0]])
    return out[:size]


def gen_survival_case(
    case: SurvivalCase,
    m: int,
    n: int,
    p0: float,
    p1: float,
    rng: np.random.Generator,
) -> SimulatedSurvival:
    """
    m subjects per group; group g pairs truncated-normal times with ER(n, p_g) graphs.

    Easy: N(2, 0.8^2) vs N(4, 1). Hard: N(3, 0.8^2) vs 0.4 N(4, 1) + 0.6 N(2, 0.8^2).
    """
    if m < 2:
        raise ValueError(f"need at least 2 subjects per group, got {m}")
    case = SurvivalCase(case)
    graphs, times, groups = [], [], []
    for group, p in ((0, p0), (1, p1)):
        times.append(_positive_draws(SURVIVAL_CASES[case][group], m, rng))
        graphs.extend(gen_er(n, p, rng) for _ in range(m))
        groups.append(np.full(m, group))
    logger.info(f"Simulated {case.value} survival case: {2 * m} subjects, ER graphs on {n} nodes")
    return SimulatedSurvival(graphs, np.concatenate(times), np.concatenate(groups), case)


def simulate_survival(design: SimDesign, rng: np.random.Generator) -> SimulatedSurvival:
    if design.survival_case is None:
        raise ValueError("survival simulation needs a survival_case")
    return gen_survival_case(design.survival_case, design.m // 2, design.n, design.er_p0, design.er_p1, rng)


def true_survival(case: SurvivalCase | str, group: int, grid: np.ndarray) -> np.ndarray:
    """Analytic S(t) of a simulated group's time distribution, restricted to t > 0."""
    components = SURVIVAL_CASES[SurvivalCase(case)][group]
    grid = np.asarray(grid, dtype=float)

    def tail(t):
        return sum(w * stats.norm.sf(t, loc=mu, scale=sd) for w, mu, sd in components)

    return np.clip(tail(np.maximum(grid, 0.0)) / tail(0.0), 0.0, 1.0)
