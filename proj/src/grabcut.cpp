#include "coseg/grabcut.hpp"

#include <cmath>
#include <stdexcept>

namespace coseg {

namespace {

constexpr double kSqrt2Inv = 0.70710678118654752440084436210485;

// 8-neighborhood half-set (each undirected pair visited once): E, S, SE, SW.
struct Neighbor {
    int dx, dy;
    double inv_dist;
};
constexpr Neighbor kNeighbors8[] = {
    {1, 0, 1.0}, {0, 1, 1.0}, {1, 1, kSqrt2Inv}, {-1, 1, kSqrt2Inv}};

template <typename F>
void for_each_pair(int w, int h, int neighbor_system, F&& f) {
    const int count = neighbor_system == 4 ? 2 : 4;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int k = 0; k < count; ++k) {
                const int nx = x + kNeighbors8[k].dx;
                const int ny = y + kNeighbors8[k].dy;
                if (nx < 0 || nx >= w || ny >= h) continue;
                f(x, y, nx, ny, kNeighbors8[k].inv_dist);
            }
}

}  // namespace

double contrast_beta(const ImageGrid& img, int neighbor_system) {
    double sum = 0.0;
    long n = 0;
    for_each_pair(img.width, img.height, neighbor_system,
                  [&](int x, int y, int nx, int ny, double) {
                      const double d = img.at(x, y) - img.at(nx, ny);
                      sum += d * d;
                      ++n;
                  });
    if (n == 0 || sum <= 0.0) return 0.0;  // uniform image: pure Potts
    return 1.0 / (2.0 * sum / static_cast<double>(n));
}

FlowGraph build_graph(const ImageGrid& img, const Trimap& trimap, const GmmModel& fg_gmm,
                      const GmmModel& bg_gmm, const GrabcutConfig& cfg) {
    if (img.width != trimap.width || img.height != trimap.height)
        throw std::invalid_argument("build_graph: image/trimap dimension mismatch");
    const int w = img.width, h = img.height;
    FlowGraph g(w * h);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int node = y * w + x;
            switch (trimap.at(x, y)) {
                case TrimapLabel::DefiniteFG:
                    g.add_terminal(node, kHardSeedCapacity, 0.0);
                    break;
                case TrimapLabel::DefiniteBG:
                    g.add_terminal(node, 0.0, kHardSeedCapacity);
                    break;
                default: {
                    const double v = img.at(x, y);
                    // Source arc pays the background cost, sink arc the
                    // foreground cost; source side of the cut = foreground.
                    // NLLs can go negative for very peaked mixtures, so both
                    // arcs are shifted by a per-pixel constant, which changes
                    // every cut by the same amount and keeps the argmin.
                    const double cb = gmm_neg_log_likelihood(bg_gmm, v);
                    const double cf = gmm_neg_log_likelihood(fg_gmm, v);
                    const double shift = std::max(0.0, -std::min(cb, cf));
                    g.add_terminal(node, cb + shift, cf + shift);
                }
            }
        }
    }

    const double beta = contrast_beta(img, cfg.neighbor_system);
    for_each_pair(w, h, cfg.neighbor_system, [&](int x, int y, int nx, int ny, double inv_dist) {
        const double d = img.at(x, y) - img.at(nx, ny);
        const double cap = cfg.smoothness_gamma * std::exp(-beta * d * d) * inv_dist;
        g.add_edge(y * w + x, ny * w + nx, cap);
    });
    return g;
}

double grabcut_energy(const ImageGrid& img, const Trimap& trimap, const BinaryMask& labeling,
                      const GmmModel& fg_gmm, const GmmModel& bg_gmm, const GrabcutConfig& cfg) {
    const int w = img.width, h = img.height;
    (void)trimap;
    double energy = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            energy += gmm_neg_log_likelihood(labeling.at(x, y) ? fg_gmm : bg_gmm, img.at(x, y));
    const double beta = contrast_beta(img, cfg.neighbor_system);
    for_each_pair(w, h, cfg.neighbor_system, [&](int x, int y, int nx, int ny, double inv_dist) {
        if (labeling.at(x, y) != labeling.at(nx, ny)) {
            const double d = img.at(x, y) - img.at(nx, ny);
            energy += cfg.smoothness_gamma * std::exp(-beta * d * d) * inv_dist;
        }
    });
    return energy;
}

BinaryMask grabcut(const ImageGrid& img, const Trimap& trimap, const GrabcutConfig& cfg,
                   SeededRng& rng, GrabcutTrace* trace) {
    cfg.validate();
    trimap.validate();
    if (img.width != trimap.width || img.height != trimap.height)
        throw std::invalid_argument("grabcut: image/trimap dimension mismatch");
    const int w = img.width, h = img.height;

    // Initial labeling straight from the trimap: FG = Definite/ProbableFG.
    BinaryMask labeling(w, h);
    for (int i = 0; i < w * h; ++i) {
        const TrimapLabel t = trimap.labels[i];
        labeling.labels[i] =
            (t == TrimapLabel::DefiniteFG || t == TrimapLabel::ProbableFG) ? 1 : 0;
    }

    auto gather = [&](std::uint8_t cls) {
        std::vector<double> samples;
        samples.reserve(labeling.size());
        for (std::size_t i = 0; i < labeling.size(); ++i)
            if (labeling.labels[i] == cls) samples.push_back(img.data[i]);
        return samples;
    };

    GmmModel fg_gmm, bg_gmm;
    for (int iter = 0; iter < cfg.grabcut_iterations; ++iter) {
        std::vector<double> fg_samples = gather(1);
        std::vector<double> bg_samples = gather(0);
        // A class can only be sampled with fewer points than components on
        // tiny images; cap K at the sample count.
        const int fg_k = std::min<int>(cfg.gmm_components, static_cast<int>(fg_samples.size()));
        const int bg_k = std::min<int>(cfg.gmm_components, static_cast<int>(bg_samples.size()));
        if (fg_k < 1 || bg_k < 1)
            throw std::runtime_error("grabcut: a class has no pixels to model");
        if (iter == 0) {
            fg_gmm = fit_gmm(fg_samples, fg_k, cfg.gmm_em_iterations, rng);
            bg_gmm = fit_gmm(bg_samples, bg_k, cfg.gmm_em_iterations, rng);
        } else {
            // Warm start keeps the data term descending on the new labeling.
            fg_gmm = refit_gmm(fg_gmm, fg_samples, cfg.gmm_em_iterations);
            bg_gmm = refit_gmm(bg_gmm, bg_samples, cfg.gmm_em_iterations);
        }

        FlowGraph g = build_graph(img, trimap, fg_gmm, bg_gmm, cfg);
        const FlowGraph::CutResult cut = g.max_flow_min_cut();
        for (int i = 0; i < w * h; ++i) labeling.labels[i] = cut.source_side[i] ? 1 : 0;
        // Hard constraints are enforced by capacity, restated here exactly.
        for (int i = 0; i < w * h; ++i) {
            if (trimap.labels[i] == TrimapLabel::DefiniteFG) labeling.labels[i] = 1;
            if (trimap.labels[i] == TrimapLabel::DefiniteBG) labeling.labels[i] = 0;
        }
        if (trace)
            trace->energy_per_iteration.push_back(
                grabcut_energy(img, trimap, labeling, fg_gmm, bg_gmm, cfg));
    }
    if (trace) {
        trace->final_fg = fg_gmm;
        trace->final_bg = bg_gmm;
    }
    return labeling;
}

}  // namespace coseg
