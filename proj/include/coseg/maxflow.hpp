#pragma once

#include <cstdint>
#include <vector>

namespace coseg {

// s-t flow network over pixel nodes. Terminal capacities are stored per
// node; neighbor edges are added in pairs (residual arcs share storage).
class FlowGraph {
public:
    explicit FlowGraph(int node_count);

    int node_count() const { return node_count_; }

    // Accumulates; capacities must be finite and non-negative.
    void add_terminal(int node, double source_cap, double sink_cap);
    // Undirected pixel-pair edge with equal capacity both ways.
    void add_edge(int a, int b, double capacity);

    double source_cap(int node) const { return src_[node]; }
    double sink_cap(int node) const { return snk_[node]; }

    struct Edge {
        int a, b;
        double capacity;
    };
    const std::vector<Edge>& edges() const { return edges_; }

    struct CutResult {
        double flow = 0.0;
        // true = node on the source side of the min cut.
        std::vector<bool> source_side;
    };

    // Exact max-flow via Dinic's algorithm (BFS level graph + blocking
    // flow). Terminates for real capacities because the phase count is
    // bounded by the node count independent of capacity values.
    CutResult max_flow_min_cut() const;

private:
    int node_count_;
    std::vector<double> src_, snk_;
    std::vector<Edge> edges_;
};

}  // namespace coseg
