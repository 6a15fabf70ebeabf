#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "coseg/phantom.hpp"

using namespace coseg;

namespace {

BinaryMask ellipse_mask(int s, double cx, double cy, double a, double b) {
    BinaryMask m(s, s);
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double dx = (x - cx) / a, dy = (y - cy) / b;
            if (dx * dx + dy * dy <= 1.0) m.at(x, y) = 1;
        }
    return m;
}

}  // namespace

TEST_CASE("recist from an axis-aligned ellipse finds the long axis within 1 px") {
    const BinaryMask m = ellipse_mask(64, 32, 30, 20, 9);
    const RecistAnnotation ann = recist_from_mask(m, "e");
    ann.validate();

    // Exhaustive longest-chord oracle over foreground pixels.
    std::vector<std::pair<int, int>> fg;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (m.at(x, y)) fg.emplace_back(x, y);
    double best = 0.0;
    for (std::size_t i = 0; i < fg.size(); ++i)
        for (std::size_t j = i + 1; j < fg.size(); ++j) {
            const double dx = fg[i].first - fg[j].first;
            const double dy = fg[i].second - fg[j].second;
            best = std::max(best, std::sqrt(dx * dx + dy * dy));
        }
    CHECK(ann.major.length() == doctest::Approx(best).epsilon(1e-9));

    // Long-axis endpoints sit at the ellipse's horizontal extremes +- 1 px.
    CHECK(std::abs(ann.major.a.y - 30.0) <= 1.0);
    CHECK(std::abs(ann.major.b.y - 30.0) <= 1.0);
    const double ex0 = std::min(ann.major.a.x, ann.major.b.x);
    const double ex1 = std::max(ann.major.a.x, ann.major.b.x);
    CHECK(std::abs(ex0 - 12.0) <= 1.0);
    CHECK(std::abs(ex1 - 52.0) <= 1.0);
    // Minor is perpendicular-ish and close to the 2b diameter.
    CHECK(ann.minor.length() >= 14.0);
    CHECK(ann.minor.length() <= 2 * 9 + 2);
}

TEST_CASE("phantom generation is deterministic and balanced over archetypes") {
    PhantomSpec spec = default_phantom_spec();
    spec.lesion_count = 24;
    spec.image_size = 96;
    spec.seed = 9;
    const auto cases1 = phantom_generate(spec);
    const auto cases2 = phantom_generate(spec);
    REQUIRE(cases1.size() == 24);

    std::map<int, int> counts;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < cases1.size(); ++i) {
        ++counts[cases1[i].archetype];
        ids.insert(cases1[i].lesion_id);
        CHECK(cases1[i].image.data == cases2[i].image.data);
        CHECK(cases1[i].gt_mask == cases2[i].gt_mask);
    }
    CHECK(ids.size() == 24);  // unique ids
    REQUIRE(counts.size() == 4);
    for (const auto& [arch, n] : counts) CHECK(n == 6);
}

TEST_CASE("phantom annotations are valid and consistent with the ground truth") {
    PhantomSpec spec = default_phantom_spec();
    spec.lesion_count = 12;
    spec.seed = 4;
    for (const auto& c : phantom_generate(spec)) {
        c.annotation.validate();
        // Both diameters stay inside the GT bounding box (+1 px slack).
        int x0 = c.gt_mask.width, x1 = -1, y0 = c.gt_mask.height, y1 = -1;
        for (int y = 0; y < c.gt_mask.height; ++y)
            for (int x = 0; x < c.gt_mask.width; ++x)
                if (c.gt_mask.at(x, y)) {
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                }
        for (const Point& p :
             {c.annotation.major.a, c.annotation.major.b, c.annotation.minor.a,
              c.annotation.minor.b}) {
            CHECK(p.x >= x0 - 1);
            CHECK(p.x <= x1 + 1);
            CHECK(p.y >= y0 - 1);
            CHECK(p.y <= y1 + 1);
        }
        CHECK(c.gt_mask.count() > 0);
        // Lesion intensity is separated from the immediate background.
        double in_sum = 0.0;
        std::size_t n = c.gt_mask.count();
        for (std::size_t i = 0; i < c.gt_mask.size(); ++i)
            if (c.gt_mask.labels[i]) in_sum += c.image.data[i];
        const auto& arch = default_phantom_spec().archetypes[c.archetype];
        CHECK(std::abs(in_sum / n - arch.lesion_intensity) < 0.1);
    }
}

TEST_CASE("spec validation rejects nonsense") {
    PhantomSpec spec = default_phantom_spec();
    spec.image_size = 16;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = default_phantom_spec();
    spec.lesion_count = 0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = default_phantom_spec();
    spec.archetypes[0].lesion_intensity = 1.5;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("recist_from_mask rejects empty and single-pixel regions") {
    BinaryMask empty(16, 16);
    CHECK_THROWS_AS(recist_from_mask(empty, "e"), std::runtime_error);
    BinaryMask dot(16, 16);
    dot.at(8, 8) = 1;
    CHECK_THROWS_AS(recist_from_mask(dot, "d"), std::runtime_error);
}
