#include "coseg/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace coseg {

namespace {
constexpr double kResidualEps = 1e-12;
}

FlowGraph::FlowGraph(int node_count)
    : node_count_(node_count), src_(node_count, 0.0), snk_(node_count, 0.0) {
    if (node_count < 1) throw std::invalid_argument("FlowGraph: need at least one node");
}

void FlowGraph::add_terminal(int node, double source_cap, double sink_cap) {
    if (node < 0 || node >= node_count_) throw std::out_of_range("FlowGraph: node out of range");
    if (source_cap < 0.0 || sink_cap < 0.0 || !std::isfinite(source_cap) ||
        !std::isfinite(sink_cap))
        throw std::invalid_argument("FlowGraph: terminal capacities must be finite and >= 0");
    src_[node] += source_cap;
    snk_[node] += sink_cap;
}

void FlowGraph::add_edge(int a, int b, double capacity) {
    if (a < 0 || a >= node_count_ || b < 0 || b >= node_count_ || a == b)
        throw std::out_of_range("FlowGraph: invalid edge endpoints");
    if (capacity < 0.0 || !std::isfinite(capacity))
        throw std::invalid_argument("FlowGraph: edge capacity must be finite and >= 0");
    edges_.push_back({a, b, capacity});
}

FlowGraph::CutResult FlowGraph::max_flow_min_cut() const {
    const int n = node_count_ + 2;  // pixels + source + sink
    const int s = node_count_;
    const int t = node_count_ + 1;

    // CSR-style arc storage: arc i and i^1 are residual partners.
    struct Arc {
        int to;
        double cap;
    };
    std::vector<Arc> arcs;
    std::vector<std::vector<int>> adj(n);
    auto add_arc = [&](int u, int v, double cap_uv, double cap_vu) {
        adj[u].push_back(static_cast<int>(arcs.size()));
        arcs.push_back({v, cap_uv});
        adj[v].push_back(static_cast<int>(arcs.size()));
        arcs.push_back({u, cap_vu});
    };
    for (int v = 0; v < node_count_; ++v) {
        if (src_[v] > 0.0) add_arc(s, v, src_[v], 0.0);
        if (snk_[v] > 0.0) add_arc(v, t, snk_[v], 0.0);
    }
    for (const Edge& e : edges_)
        if (e.capacity > 0.0) add_arc(e.a, e.b, e.capacity, e.capacity);

    std::vector<int> level(n), it(n), queue(n);
    double total_flow = 0.0;

    auto bfs = [&]() {
        std::fill(level.begin(), level.end(), -1);
        int head = 0, tail = 0;
        level[s] = 0;
        queue[tail++] = s;
        while (head < tail) {
            const int u = queue[head++];
            for (int ai : adj[u]) {
                const Arc& a = arcs[ai];
                if (a.cap > kResidualEps && level[a.to] < 0) {
                    level[a.to] = level[u] + 1;
                    queue[tail++] = a.to;
                }
            }
        }
        return level[t] >= 0;
    };

    // Recursive blocking-flow DFS with the current-arc optimization.
    auto dfs = [&](auto&& self, int u, double pushed) -> double {
        if (u == t) return pushed;
        for (int& i = it[u]; i < static_cast<int>(adj[u].size()); ++i) {
            const int ai = adj[u][i];
            Arc& a = arcs[ai];
            if (a.cap > kResidualEps && level[a.to] == level[u] + 1) {
                const double got = self(self, a.to, std::min(pushed, a.cap));
                if (got > 0.0) {
                    a.cap -= got;
                    arcs[ai ^ 1].cap += got;
                    return got;
                }
            }
        }
        level[u] = -1;
        return 0.0;
    };

    while (bfs()) {
        std::fill(it.begin(), it.end(), 0);
        while (true) {
            const double pushed = dfs(dfs, s, std::numeric_limits<double>::infinity());
            if (pushed <= 0.0) break;
            total_flow += pushed;
        }
    }

    // Min cut: nodes reachable from s in the final residual graph.
    CutResult result;
    result.flow = total_flow;
    result.source_side.assign(node_count_, false);
    std::vector<bool> seen(n, false);
    int head = 0, tail = 0;
    seen[s] = true;
    queue[tail++] = s;
    while (head < tail) {
        const int u = queue[head++];
        for (int ai : adj[u]) {
            const Arc& a = arcs[ai];
            if (a.cap > kResidualEps && !seen[a.to]) {
                seen[a.to] = true;
                queue[tail++] = a.to;
            }
        }
    }
    for (int v = 0; v < node_count_; ++v) result.source_side[v] = seen[v];
    return result;
}

}  // namespace coseg
