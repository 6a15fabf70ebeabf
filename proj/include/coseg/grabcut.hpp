#pragma once

#include "coseg/gmm.hpp"
#include "coseg/grid.hpp"
#include "coseg/maxflow.hpp"
#include "coseg/recist.hpp"
#include "coseg/rng.hpp"

namespace coseg {

// Hard seeds use a large finite capacity instead of true infinity.
inline constexpr double kHardSeedCapacity = 1e9;

// Contrast sensitivity beta = 1 / (2 <(Ip - Iq)^2>) averaged over all
// neighbor pairs; 0 for a uniform image (pure Potts smoothness).
double contrast_beta(const ImageGrid& img, int neighbor_system);

// One node per pixel. Terminal capacities carry the GMM negative log
// likelihoods (source side = background cost, sink side = foreground cost,
// so the source side of the cut is the foreground). Neighbor capacities are
// gamma * exp(-beta (Ip-Iq)^2) / dist(p,q).
FlowGraph build_graph(const ImageGrid& img, const Trimap& trimap, const GmmModel& fg_gmm,
                      const GmmModel& bg_gmm, const GrabcutConfig& cfg);

// GrabCut energy of a labeling under the given GMMs: per-pixel data term
// (Definite seeds keep their fixed labels, contributing a labeling-
// independent offset) plus the contrast-weighted Potts smoothness term.
double grabcut_energy(const ImageGrid& img, const Trimap& trimap, const BinaryMask& labeling,
                      const GmmModel& fg_gmm, const GmmModel& bg_gmm, const GrabcutConfig& cfg);

struct GrabcutTrace {
    std::vector<double> energy_per_iteration;
    // Models of the last iteration, for energy-oracle checks.
    GmmModel final_fg, final_bg;
};

// Iterated GMM refit + min-cut. Definite trimap labels never flip; energy
// is non-increasing across iterations (GMM refits warm-start EM from the
// previous model so both half-steps descend).
BinaryMask grabcut(const ImageGrid& img, const Trimap& trimap, const GrabcutConfig& cfg,
                   SeededRng& rng, GrabcutTrace* trace = nullptr);

}  // namespace coseg
