#include "gridsec/graph.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace gridsec {

namespace {

// adjacency[v] = list of (edge_id, neighbor), sorted by edge id.
std::vector<std::vector<std::pair<int, int>>> adjacency(
    const OrientedGraph& g) {
  std::vector<std::vector<std::pair<int, int>>> adj(g.n_vertices);
  for (int e = 0; e < g.n_edges(); ++e) {
    const auto [a, b] = g.edges[e];
    adj[a].push_back({e, b});
    adj[b].push_back({e, a});
  }
  for (auto& lst : adj) std::sort(lst.begin(), lst.end());
  return adj;
}

// Orders an edge set known to form one simple cycle into the canonical
// closed walk: start at the lowest-id edge in its graph orientation.
Cycle cycle_from_edge_set(const OrientedGraph& g,
                          const std::vector<int>& edge_set) {
  if (edge_set.size() < 2)
    throw GraphError("cycle must contain at least 2 edges");
  std::vector<int> sorted = edge_set;
  std::sort(sorted.begin(), sorted.end());

  std::vector<std::vector<std::pair<int, int>>> local(g.n_vertices);
  for (int e : sorted) {
    const auto [a, b] = g.edges[e];
    local[a].push_back({e, b});
    local[b].push_back({e, a});
  }
  const int start_edge = sorted.front();
  const auto [start_v, next_v] = g.edges[start_edge];

  Cycle c;
  c.edge_ids.push_back(start_edge);
  c.signs.push_back(+1);
  int prev_edge = start_edge;
  int at = next_v;
  while (at != start_v) {
    int chosen = -1, to = -1;
    for (const auto& [e, w] : local[at]) {
      if (e != prev_edge) {
        chosen = e;
        to = w;
        break;
      }
    }
    if (chosen < 0) throw GraphError("edge set does not form a cycle");
    c.edge_ids.push_back(chosen);
    c.signs.push_back(g.edges[chosen].first == at ? +1 : -1);
    prev_edge = chosen;
    at = to;
  }
  // Parallel pair: the walk above stops early if the second edge leads
  // straight back; validate that every member edge was used.
  if (c.edge_ids.size() != sorted.size())
    throw GraphError("edge set is not a single simple cycle");
  return c;
}

struct SpanningTree {
  std::vector<int> parent_vertex;  // -1 at root
  std::vector<int> parent_edge;    // -1 at root
  std::vector<int> depth;
};

SpanningTree bfs_tree(const std::vector<std::vector<std::pair<int, int>>>& adj,
                      int root) {
  const int n = static_cast<int>(adj.size());
  SpanningTree t{std::vector<int>(n, -1), std::vector<int>(n, -1),
                 std::vector<int>(n, -1)};
  std::queue<int> q;
  q.push(root);
  t.depth[root] = 0;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (const auto& [e, w] : adj[v]) {
      if (t.depth[w] < 0) {
        t.depth[w] = t.depth[v] + 1;
        t.parent_vertex[w] = v;
        t.parent_edge[w] = e;
        q.push(w);
      }
    }
  }
  return t;
}

// Tree-path edge ids between a and b via nearest common ancestor.
std::vector<int> tree_path_edges(const SpanningTree& t, int a, int b) {
  std::vector<int> edges;
  int x = a, y = b;
  while (t.depth[x] > t.depth[y]) {
    edges.push_back(t.parent_edge[x]);
    x = t.parent_vertex[x];
  }
  while (t.depth[y] > t.depth[x]) {
    edges.push_back(t.parent_edge[y]);
    y = t.parent_vertex[y];
  }
  while (x != y) {
    edges.push_back(t.parent_edge[x]);
    edges.push_back(t.parent_edge[y]);
    x = t.parent_vertex[x];
    y = t.parent_vertex[y];
  }
  return edges;
}

CycleBasis basis_from_tree(const OrientedGraph& g, const SpanningTree& t) {
  CycleBasis basis;
  basis.kind = BasisKind::fundamental;
  std::vector<char> is_tree_edge(g.n_edges(), 0);
  for (int v = 0; v < g.n_vertices; ++v) {
    if (t.parent_edge[v] >= 0) is_tree_edge[t.parent_edge[v]] = 1;
  }
  for (int e = 0; e < g.n_edges(); ++e) {
    if (is_tree_edge[e]) continue;
    const auto [a, b] = g.edges[e];
    std::vector<int> edge_set = tree_path_edges(t, a, b);
    edge_set.push_back(e);
    basis.cycles.push_back(cycle_from_edge_set(g, edge_set));
  }
  return basis;
}

// --- small GF(2) bitset machinery ------------------------------------------

using Bitset = std::vector<std::uint64_t>;

Bitset make_bitset(int n_bits) { return Bitset((n_bits + 63) / 64, 0); }

void set_bit(Bitset& b, int i) { b[i / 64] |= (1ULL << (i % 64)); }

bool any_bit(const Bitset& b) {
  for (auto w : b)
    if (w) return true;
  return false;
}

void xor_into(Bitset& dst, const Bitset& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] ^= src[i];
}

int lowest_bit(const Bitset& b) {
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i]) return static_cast<int>(i * 64 + std::countr_zero(b[i]));
  }
  return -1;
}

// Greedy independent filter; rows are stored reduced, keyed by pivot bit.
class Gf2Eliminator {
 public:
  // True and records the row if it is independent of what was added so far.
  bool add_if_independent(Bitset row) {
    for (const auto& [pivot, basis_row] : rows_) {
      if (row[pivot / 64] & (1ULL << (pivot % 64))) xor_into(row, basis_row);
    }
    if (!any_bit(row)) return false;
    rows_.emplace_back(lowest_bit(row), std::move(row));
    return true;
  }

  int rank() const { return static_cast<int>(rows_.size()); }

 private:
  std::vector<std::pair<int, Bitset>> rows_;
};

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

SpanningTree tree_from_edge_list(const OrientedGraph& g,
                                 const std::vector<int>& tree_edges) {
  std::vector<std::vector<std::pair<int, int>>> adj(g.n_vertices);
  for (int e : tree_edges) {
    const auto [a, b] = g.edges[e];
    adj[a].push_back({e, b});
    adj[b].push_back({e, a});
  }
  for (auto& lst : adj) std::sort(lst.begin(), lst.end());
  return bfs_tree(adj, 0);
}

// Dijkstra tree with deterministic (dist, vertex) tie-breaking. Subpaths of
// chosen paths are themselves the chosen paths, which Horton's construction
// needs.
SpanningTree shortest_path_tree(
    const std::vector<std::vector<std::pair<int, int>>>& adj,
    const std::vector<double>& w, int root) {
  const int n = static_cast<int>(adj.size());
  SpanningTree t{std::vector<int>(n, -1), std::vector<int>(n, -1),
                 std::vector<int>(n, -1)};
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<char> done(n, 0);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[root] = 0.0;
  t.depth[root] = 0;
  pq.push({0.0, root});
  while (!pq.empty()) {
    const auto [d, v] = pq.top();
    pq.pop();
    if (done[v]) continue;
    done[v] = 1;
    for (const auto& [e, u] : adj[v]) {
      const double nd = d + w[e];
      if (nd < dist[u]) {
        dist[u] = nd;
        t.parent_vertex[u] = v;
        t.parent_edge[u] = e;
        t.depth[u] = t.depth[v] + 1;
        pq.push({nd, u});
      }
    }
  }
  return t;
}

}  // namespace

OrientedGraph build_graph(const GridCase& gc) {
  validate(gc);
  OrientedGraph g;
  g.n_vertices = gc.n_buses();
  g.edges.reserve(gc.n_branches());
  for (const auto& br : gc.branches)
    g.edges.push_back({gc.bus_index(br.from_bus), gc.bus_index(br.to_bus)});
  return g;
}

Eigen::VectorXd signed_indicator(const Cycle& cycle, int n_edges) {
  Eigen::VectorXd zeta = Eigen::VectorXd::Zero(n_edges);
  for (int i = 0; i < cycle.length(); ++i)
    zeta[cycle.edge_ids[i]] = cycle.signs[i];
  return zeta;
}

CycleBasis fundamental_cycle_basis(const OrientedGraph& g) {
  return basis_from_tree(g, bfs_tree(adjacency(g), 0));
}

CycleBasis random_fundamental_basis(const OrientedGraph& g, Rng& rng) {
  std::vector<int> order(g.n_edges());
  std::iota(order.begin(), order.end(), 0);
  for (int i = g.n_edges() - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(order[i], order[j]);
  }
  DisjointSet dsu(g.n_vertices);
  std::vector<int> tree_edges;
  for (int e : order) {
    if (dsu.unite(g.edges[e].first, g.edges[e].second)) tree_edges.push_back(e);
  }
  return basis_from_tree(g, tree_from_edge_list(g, tree_edges));
}

CycleBasis minimum_cycle_basis(const OrientedGraph& g,
                               const std::vector<double>& weights) {
  const int m = g.n_edges();
  // Cycle-space dimension m - n + c, valid for disconnected graphs too.
  int n_components = 0;
  {
    DisjointSet dsu(g.n_vertices);
    for (const auto& [a, b] : g.edges) dsu.unite(a, b);
    for (int v = 0; v < g.n_vertices; ++v)
      if (dsu.find(v) == v) ++n_components;
  }
  const int dim = m - g.n_vertices + n_components;
  CycleBasis basis;
  basis.kind = BasisKind::minimum;
  if (dim <= 0) return basis;

  std::vector<double> w =
      weights.empty() ? std::vector<double>(m, 1.0) : weights;
  if (static_cast<int>(w.size()) != m)
    throw GraphError("weight vector length must equal edge count");

  const auto adj = adjacency(g);

  struct Candidate {
    double weight;
    Bitset bits;
    std::vector<int> edge_set;
  };
  std::vector<Candidate> candidates;
  std::unordered_set<std::string> seen;

  auto push_candidate = [&](std::vector<int> edge_set) {
    std::sort(edge_set.begin(), edge_set.end());
    std::string key;
    key.reserve(edge_set.size() * 3);
    for (int e : edge_set) {
      key += static_cast<char>(e & 0xff);
      key += static_cast<char>((e >> 8) & 0xff);
      key += ',';
    }
    if (!seen.insert(key).second) return;
    Candidate c;
    c.weight = 0.0;
    c.bits = make_bitset(m);
    for (int e : edge_set) {
      c.weight += w[e];
      set_bit(c.bits, e);
    }
    c.edge_set = std::move(edge_set);
    candidates.push_back(std::move(c));
  };

  // Parallel-edge pairs form 2-cycles not always reachable via tree paths.
  for (int e1 = 0; e1 < m; ++e1) {
    for (int e2 = e1 + 1; e2 < m; ++e2) {
      const auto [a1, b1] = g.edges[e1];
      const auto [a2, b2] = g.edges[e2];
      if ((a1 == a2 && b1 == b2) || (a1 == b2 && b1 == a2))
        push_candidate({e1, e2});
    }
  }

  // Horton candidates: for each root v and edge (a, b), cycle
  // path(v,a) + (a,b) + path(b,v), kept when the two paths meet only at v.
  for (int v = 0; v < g.n_vertices; ++v) {
    const SpanningTree t = shortest_path_tree(adj, w, v);
    std::vector<int> mark(g.n_vertices, -1);
    for (int e = 0; e < m; ++e) {
      const auto [a, b] = g.edges[e];
      if (a == b) continue;
      if (t.depth[a] < 0 || t.depth[b] < 0) continue;
      if (t.parent_edge[a] == e || t.parent_edge[b] == e) continue;

      // Vertex-disjointness of the two root paths (except at v).
      for (int x = a; x != -1; x = t.parent_vertex[x]) mark[x] = e;
      bool disjoint = true;
      for (int x = b; x != -1; x = t.parent_vertex[x]) {
        if (mark[x] == e && x != v) {
          disjoint = false;
          break;
        }
      }
      if (!disjoint) continue;

      std::vector<int> edge_set;
      for (int x = a; t.parent_edge[x] != -1; x = t.parent_vertex[x])
        edge_set.push_back(t.parent_edge[x]);
      for (int x = b; t.parent_edge[x] != -1; x = t.parent_vertex[x])
        edge_set.push_back(t.parent_edge[x]);
      edge_set.push_back(e);
      push_candidate(std::move(edge_set));
    }
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& x, const Candidate& y) {
              if (x.weight != y.weight) return x.weight < y.weight;
              return x.edge_set < y.edge_set;
            });

  Gf2Eliminator elim;
  for (const auto& c : candidates) {
    if (elim.rank() == dim) break;
    if (elim.add_if_independent(c.bits))
      basis.cycles.push_back(cycle_from_edge_set(g, c.edge_set));
  }
  if (basis.size() != dim)
    throw GraphError("Horton candidate set did not span the cycle space");
  return basis;
}

double basis_weight(const CycleBasis& basis,
                    const std::vector<double>& weights) {
  double total = 0.0;
  for (const auto& c : basis.cycles) {
    for (int e : c.edge_ids) total += weights.empty() ? 1.0 : weights[e];
  }
  return total;
}

int gf2_rank(const CycleBasis& basis, int n_edges) {
  Gf2Eliminator elim;
  for (const auto& c : basis.cycles) {
    Bitset b = make_bitset(n_edges);
    for (int e : c.edge_ids) set_bit(b, e);
    elim.add_if_independent(std::move(b));
  }
  return elim.rank();
}

Eigen::MatrixXd topology_null_space(const GridCase& gc,
                                    const CycleBasis& basis) {
  const int m = gc.n_branches();
  Eigen::MatrixXd n_space(m, basis.size());
  for (int i = 0; i < basis.size(); ++i) {
    Eigen::VectorXd col = signed_indicator(basis.cycles[i], m);
    for (int e = 0; e < m; ++e) col[e] *= gc.branches[e].reactance;
    n_space.col(i) = col.normalized();
  }
  return n_space;
}

PrunedGraph prune_leaves(const OrientedGraph& g) {
  std::vector<char> edge_alive(g.n_edges(), 1);
  std::vector<int> degree(g.n_vertices, 0);
  for (const auto& [a, b] : g.edges) {
    ++degree[a];
    ++degree[b];
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int e = 0; e < g.n_edges(); ++e) {
      if (!edge_alive[e]) continue;
      const auto [a, b] = g.edges[e];
      if (degree[a] == 1 || degree[b] == 1) {
        edge_alive[e] = 0;
        --degree[a];
        --degree[b];
        changed = true;
      }
    }
  }

  PrunedGraph out;
  std::vector<int> vmap(g.n_vertices, -1);
  for (int v = 0; v < g.n_vertices; ++v) {
    if (degree[v] > 0) {
      vmap[v] = static_cast<int>(out.kept_vertices.size());
      out.kept_vertices.push_back(v);
    }
  }
  out.graph.n_vertices = static_cast<int>(out.kept_vertices.size());
  for (int e = 0; e < g.n_edges(); ++e) {
    if (!edge_alive[e]) continue;
    out.kept_edges.push_back(e);
    out.graph.edges.push_back({vmap[g.edges[e].first], vmap[g.edges[e].second]});
  }
  return out;
}

std::string basis_to_json(const CycleBasis& basis) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : basis.cycles) {
    j.push_back({{"edge_ids", c.edge_ids},
                 {"signs", c.signs},
                 {"length", c.length()}});
  }
  return j.dump(2) + "\n";
}

}  // namespace gridsec
