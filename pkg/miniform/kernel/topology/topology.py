import networkx as nx

from miniform.kernel.term_core import term_core as tc
from miniform.utils import get_logger

logger = get_logger("topology")


def index_of(arg):
    """The Variable of an argument that is a bare index, else None."""
    if len(arg) == 1 and arg[0].coef == 1 and len(arg[0].factors) == 1:
        f = arg[0].factors[0]
        if isinstance(f, tc.Index):
            return f.var
    return None


def contraction_graph(term, fun, arguments):
    """
    Vertices are the occurrences of `fun` with `arguments` arguments, in
    canonical term order; an index found in exactly two vertex slots is an
    edge keyed by the index name. Returns (graph, vertex factor positions).
    """
    positions = [
        n
        for n, f in enumerate(term.factors)
        if isinstance(f, tc.FuncApp) and f.var is fun and len(f.args) == arguments
    ]
    slots = {}
    for vertex, position in enumerate(positions):
        for slot, arg in enumerate(term.factors[position].args):
            var = index_of(arg)
            if var is not None:
                slots.setdefault(var.name, []).append((vertex, slot))

    graph = nx.MultiGraph()
    graph.add_nodes_from(range(len(positions)))
    for name, found in slots.items():
        if len(found) == 2 and found[0][0] != found[1][0]:
            (u, su), (v, sv) = found
            graph.add_edge(u, v, key=name, slots={u: su, v: sv})
    return graph, positions


def _first_key(graph, a, b):
    return next(iter(graph[a][b]))


def _cycle_through(graph, root, loopsize):
    """
    Shortest loop through `root` (of exactly `loopsize` vertices when given)
    as [(vertex, outgoing edge key), ...], or None.

    Edges at the root are tried in slot order. The walk returns to the root
    through the edge being tried, so a loop is always entered through the
    lowest root slot it uses and left through the other one.
    """
    best = None
    edges = sorted(graph.edges(root, keys=True, data="slots"), key=lambda e: e[3][root])
    for _, other, key, _ in edges:
        rest = graph.copy()
        rest.remove_edge(root, other, key)
        if loopsize is None:
            try:
                paths = [nx.shortest_path(rest, root, other)]
            except nx.NetworkXNoPath:
                paths = []
        else:
            paths = (p for p in nx.all_simple_paths(rest, root, other, cutoff=loopsize - 1) if len(p) == loopsize)
        path = next(iter(paths), None)
        if path is None:
            continue
        walk = [(a, _first_key(rest, a, b)) for a, b in zip(path, path[1:])]
        walk.append((other, key))
        if best is None or len(walk) < len(best):
            best = walk
    return best


def find_loop(graph, loopsize=None):
    """First shortest loop over roots in vertex order; `loopsize` None means any length."""
    best = None
    for root in sorted(graph.nodes):
        walk = _cycle_through(graph, root, loopsize)
        if walk is not None and (best is None or len(walk) < len(best)):
            best = walk
            if len(best) == 2:
                break
    return best


def replace_loop(term, fun, arguments, loopsize, outfun):
    """
    Replace one loop of `fun` vertices by a single `outfun`.

    The externals of the loop vertices become the arguments of outfun, in
    loop order from the first vertex, walking away from it through its
    highest loop slot. When `fun` is antisymmetric each vertex contributes
    the sign of bringing its arguments into the order (outgoing loop index,
    externals, incoming loop index).
    Returns the resulting expression (a tuple of at most one term), or None
    when there is no such loop.
    """
    graph, positions = contraction_graph(term, fun, arguments)
    walk = find_loop(graph, loopsize)
    if walk is None:
        return None

    sign = 1
    externals = []
    for n, (vertex, out_key) in enumerate(walk):
        in_vertex, in_key = walk[n - 1]
        out_slot = graph.edges[vertex, walk[(n + 1) % len(walk)][0], out_key]["slots"][vertex]
        in_slot = graph.edges[in_vertex, vertex, in_key]["slots"][vertex]
        app = term.factors[positions[vertex]]
        rest = [slot for slot in range(len(app.args)) if slot not in (out_slot, in_slot)]
        if fun.symmetry == "antisymmetric":
            sign *= tc.permutation_parity([out_slot, *rest, in_slot])
        externals.extend(app.args[slot] for slot in rest)

    removed = {positions[vertex] for vertex, _ in walk}
    factors = [f for n, f in enumerate(term.factors) if n not in removed]
    app, outsign = tc.make_function(outfun, externals)
    logger.debug("replaced loop of %d %s vertices by %s", len(walk), fun.name, tc.format_factor(app))
    result = tc.normalize(term.coef * sign * outsign, [*factors, app])
    return () if result is None else (result,)
