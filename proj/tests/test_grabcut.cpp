#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "coseg/grabcut.hpp"
#include "coseg/metrics.hpp"

using namespace coseg;

namespace {

// Seeds a 4x4 trimap with one Definite pixel per class in opposite corners.
Trimap corner_trimap(int w, int h) {
    Trimap tm(w, h, TrimapLabel::ProbableBG);
    tm.at(0, 0) = TrimapLabel::DefiniteFG;
    tm.at(w - 1, h - 1) = TrimapLabel::DefiniteBG;
    return tm;
}

}  // namespace

TEST_CASE("contrast beta hand case: 3x1 image [0,0,10]") {
    ImageGrid img(3, 1);
    img.at(2, 0) = 10.0;
    // pairs (0,1) and (1,2): mean squared difference (0 + 100)/2 = 50.
    const double beta = contrast_beta(img, 4);
    CHECK(beta == doctest::Approx(1.0 / 100.0).epsilon(1e-12));

    GrabcutConfig cfg;
    cfg.smoothness_gamma = 1.0;
    cfg.neighbor_system = 4;
    GmmModel flat;
    flat.weights = {1.0};
    flat.means = {0.0};
    flat.variances = {1.0};
    Trimap tm(3, 1, TrimapLabel::ProbableBG);
    tm.at(0, 0) = TrimapLabel::DefiniteFG;
    tm.at(2, 0) = TrimapLabel::DefiniteBG;
    const FlowGraph g = build_graph(img, tm, flat, flat, cfg);
    REQUIRE(g.edges().size() == 2);
    CHECK(g.edges()[0].capacity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.edges()[1].capacity == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("uniform image: beta is 0 and smoothness is pure Potts") {
    const ImageGrid img(5, 5, 0.4);
    CHECK(contrast_beta(img, 8) == 0.0);
}

TEST_CASE("diagonal neighbors weigh 1/sqrt(2)") {
    ImageGrid img(2, 2, 0.0);  // uniform -> every capacity is gamma * inv_dist
    GrabcutConfig cfg;
    cfg.smoothness_gamma = 2.0;
    GmmModel flat;
    flat.weights = {1.0};
    flat.means = {0.0};
    flat.variances = {1.0};
    const FlowGraph g = build_graph(img, corner_trimap(2, 2), flat, flat, cfg);
    // 8-neighborhood on 2x2: 4 axis pairs + 2 diagonals.
    REQUIRE(g.edges().size() == 6);
    int diag = 0, axis = 0;
    for (const auto& e : g.edges()) {
        if (e.capacity == doctest::Approx(2.0 / std::sqrt(2.0)).epsilon(1e-12))
            ++diag;
        else if (e.capacity == doctest::Approx(2.0).epsilon(1e-12))
            ++axis;
    }
    CHECK(diag == 2);
    CHECK(axis == 4);
}

TEST_CASE("final labeling reaches the brute-force energy minimum on 4x4 images") {
    SeededRng rng(2024);
    int ties_or_wins = 0;
    for (int trial = 0; trial < 50; ++trial) {
        ImageGrid img(4, 4);
        const double lo = rng.uniform(0.0, 0.4), hi = rng.uniform(0.6, 1.0);
        for (auto& v : img.data) v = rng.uniform() < 0.5 ? lo : hi;
        img.at(0, 0) = hi;  // keep the seeds' classes coherent
        img.at(3, 3) = lo;
        const Trimap tm = corner_trimap(4, 4);

        GrabcutConfig cfg;
        cfg.gmm_components = 2;
        cfg.grabcut_iterations = 3;
        cfg.smoothness_gamma = rng.uniform(0.1, 2.0);
        GrabcutTrace trace;
        SeededRng run_rng = rng.fork(trial);
        const BinaryMask result = grabcut(img, tm, cfg, run_rng, &trace);

        // Exhaustive oracle under the final models, Definite labels fixed.
        double best = std::numeric_limits<double>::infinity();
        for (unsigned lab = 0; lab < (1u << 16); ++lab) {
            BinaryMask cand(4, 4);
            for (int i = 0; i < 16; ++i) cand.labels[i] = (lab >> i) & 1u;
            if (!cand.at(0, 0) || cand.at(3, 3)) continue;
            best = std::min(
                best, grabcut_energy(img, tm, cand, trace.final_fg, trace.final_bg, cfg));
        }
        const double got =
            grabcut_energy(img, tm, result, trace.final_fg, trace.final_bg, cfg);
        CHECK(got <= best + 1e-9);
        ++ties_or_wins;
    }
    CHECK(ties_or_wins == 50);
}

TEST_CASE("energy is non-increasing across grabcut iterations") {
    SeededRng rng(5);
    ImageGrid img(24, 24, 0.1);
    for (int y = 6; y < 18; ++y)
        for (int x = 6; x < 18; ++x) img.at(x, y) = 0.9;
    for (auto& v : img.data) v += rng.normal(0.0, 0.02);

    Trimap tm(24, 24, TrimapLabel::ProbableBG);
    for (int y = 9; y < 15; ++y)
        for (int x = 9; x < 15; ++x) tm.at(x, y) = TrimapLabel::DefiniteFG;
    for (int y = 4; y < 20; ++y)
        for (int x = 4; x < 20; ++x)
            if (tm.at(x, y) == TrimapLabel::ProbableBG) tm.at(x, y) = TrimapLabel::ProbableFG;
    for (int i = 0; i < 24; ++i) {
        tm.at(i, 0) = TrimapLabel::DefiniteBG;
        tm.at(i, 23) = TrimapLabel::DefiniteBG;
        tm.at(0, i) = TrimapLabel::DefiniteBG;
        tm.at(23, i) = TrimapLabel::DefiniteBG;
    }

    GrabcutConfig cfg;
    cfg.grabcut_iterations = 6;
    GrabcutTrace trace;
    grabcut(img, tm, cfg, rng, &trace);
    REQUIRE(trace.energy_per_iteration.size() == 6);
    for (std::size_t i = 1; i < trace.energy_per_iteration.size(); ++i)
        CHECK(trace.energy_per_iteration[i] <= trace.energy_per_iteration[i - 1] + 1e-9);
}

TEST_CASE("bright ellipse on dark background segments to Dice >= 0.95") {
    const int S = 64;
    const double cx = 32, cy = 32, a = 18, b = 11;
    ImageGrid img(S, S, 0.1);
    BinaryMask gt(S, S);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const double dx = (x - cx) / a, dy = (y - cy) / b;
            if (dx * dx + dy * dy <= 1.0) {
                img.at(x, y) = 0.9;
                gt.at(x, y) = 1;
            }
        }

    RecistAnnotation ann;
    ann.image_id = "ellipse";
    ann.major = {{cx - a, cy}, {cx + a, cy}};
    ann.minor = {{cx, cy - b}, {cx, cy + b}};
    GrabcutConfig cfg;
    cfg.bbox_expand = 8;
    const Trimap tm = trimap_from_recist(ann, S, S, cfg);
    SeededRng rng(11);
    const BinaryMask mask = grabcut(img, tm, cfg, rng);
    CHECK(dice(confusion(mask, gt)) >= 0.95);
}

TEST_CASE("definite trimap labels never flip") {
    SeededRng rng(6);
    ImageGrid img(16, 16);
    for (auto& v : img.data) v = rng.uniform();
    Trimap tm(16, 16, TrimapLabel::ProbableFG);
    tm.at(2, 2) = TrimapLabel::DefiniteFG;
    tm.at(13, 13) = TrimapLabel::DefiniteBG;
    GrabcutConfig cfg;
    cfg.grabcut_iterations = 3;
    const BinaryMask mask = grabcut(img, tm, cfg, rng);
    CHECK(mask.at(2, 2) == 1);
    CHECK(mask.at(13, 13) == 0);
}
