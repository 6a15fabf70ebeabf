#include "coseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace coseg {

void PhantomSpec::validate() const {
    if (lesion_count < 1) throw std::invalid_argument("PhantomSpec: lesion_count must be >= 1");
    if (image_size < 32) throw std::invalid_argument("PhantomSpec: image_size must be >= 32");
    if (archetypes.empty()) throw std::invalid_argument("PhantomSpec: need archetypes");
    for (const auto& a : archetypes) {
        if (a.axis_min < 2.0 || a.axis_max < a.axis_min)
            throw std::invalid_argument("PhantomSpec: axis lengths must be >= 2 pixels");
        if (a.lesion_intensity < 0.0 || a.lesion_intensity > 1.0 ||
            a.background_intensity < 0.0 || a.background_intensity > 1.0)
            throw std::invalid_argument("PhantomSpec: intensities must be in [0,1]");
    }
}

PhantomSpec default_phantom_spec() {
    PhantomSpec spec;
    spec.archetypes = {
        {"bright-on-dark", 10.0, 20.0, 0.85, 0.15, 0.02, 0.0},
        {"dark-on-bright", 10.0, 20.0, 0.25, 0.75, 0.02, 0.0},
        {"bright-with-distractors", 9.0, 18.0, 0.70, 0.30, 0.03, 0.35},
        {"dim-on-dark", 11.0, 22.0, 0.55, 0.20, 0.04, 0.0},
    };
    return spec;
}

namespace {

struct Ellipse {
    double cx, cy, a, b, theta;
    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * std::cos(theta) + dy * std::sin(theta)) / a;
        const double v = (-dx * std::sin(theta) + dy * std::cos(theta)) / b;
        return u * u + v * v <= 1.0;
    }
};

std::vector<std::pair<int, int>> boundary_pixels(const BinaryMask& mask) {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            const bool edge = x == 0 || x == mask.width - 1 || y == 0 || y == mask.height - 1 ||
                              !mask.at(x - 1, y) || !mask.at(x + 1, y) || !mask.at(x, y - 1) ||
                              !mask.at(x, y + 1);
            if (edge) out.emplace_back(x, y);
        }
    return out;
}

bool segments_cross(const Segment& s, const Segment& t) {
    auto cross = [](double ax, double ay, double bx, double by) { return ax * by - ay * bx; };
    const double d1x = s.b.x - s.a.x, d1y = s.b.y - s.a.y;
    const double d2x = t.b.x - t.a.x, d2y = t.b.y - t.a.y;
    const double denom = cross(d1x, d1y, d2x, d2y);
    if (std::abs(denom) < 1e-12) return false;
    const double rx = t.a.x - s.a.x, ry = t.a.y - s.a.y;
    const double u = cross(rx, ry, d2x, d2y) / denom;
    const double v = cross(rx, ry, d1x, d1y) / denom;
    return u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0;
}

}  // namespace

RecistAnnotation recist_from_mask(const BinaryMask& mask, const std::string& lesion_id) {
    const auto boundary = boundary_pixels(mask);
    if (boundary.size() < 4)
        throw std::runtime_error("recist_from_mask: region too small for diameters");

    // Major axis: the longest chord, by exhaustive boundary-pair search.
    std::size_t bi = 0, bj = 1;
    double best = -1.0;
    for (std::size_t i = 0; i < boundary.size(); ++i)
        for (std::size_t j = i + 1; j < boundary.size(); ++j) {
            const double dx = boundary[i].first - boundary[j].first;
            const double dy = boundary[i].second - boundary[j].second;
            const double d2 = dx * dx + dy * dy;
            if (d2 > best) {
                best = d2;
                bi = i;
                bj = j;
            }
        }
    RecistAnnotation ann;
    ann.image_id = lesion_id;
    ann.major = {{static_cast<double>(boundary[bi].first), static_cast<double>(boundary[bi].second)},
                 {static_cast<double>(boundary[bj].first), static_cast<double>(boundary[bj].second)}};

    // Minor axis: longest chord perpendicular to the major (within an
    // angular tolerance, relaxed if nothing qualifies) that crosses it.
    const double mx = ann.major.b.x - ann.major.a.x;
    const double my = ann.major.b.y - ann.major.a.y;
    const double mlen = std::hypot(mx, my);
    for (double tol : {0.06, 0.12, 0.25, 0.5}) {
        double best_minor = -1.0;
        Segment minor{};
        for (std::size_t i = 0; i < boundary.size(); ++i)
            for (std::size_t j = i + 1; j < boundary.size(); ++j) {
                const double dx = boundary[j].first - boundary[i].first;
                const double dy = boundary[j].second - boundary[i].second;
                const double len = std::hypot(dx, dy);
                if (len < 2.0) continue;
                const double cosang = std::abs(dx * mx + dy * my) / (len * mlen);
                if (cosang > tol) continue;
                Segment cand{{static_cast<double>(boundary[i].first),
                              static_cast<double>(boundary[i].second)},
                             {static_cast<double>(boundary[j].first),
                              static_cast<double>(boundary[j].second)}};
                if (!segments_cross(cand, ann.major)) continue;
                if (len > best_minor) {
                    best_minor = len;
                    minor = cand;
                }
            }
        if (best_minor > 0.0) {
            ann.minor = minor;
            if (ann.minor.length() > ann.major.length()) std::swap(ann.major, ann.minor);
            ann.validate();
            return ann;
        }
    }
    throw std::runtime_error("recist_from_mask: no perpendicular chord found");
}

std::vector<PhantomCase> phantom_generate(const PhantomSpec& spec) {
    spec.validate();
    const int s = spec.image_size;
    const int k = static_cast<int>(spec.archetypes.size());
    std::vector<PhantomCase> cases;
    cases.reserve(spec.lesion_count);

    for (int idx = 0; idx < spec.lesion_count; ++idx) {
        // Balanced archetype assignment; per-lesion substream so a case is
        // reproducible independent of batch order.
        const int arch_idx = idx % k;
        const PhantomArchetype& arch = spec.archetypes[arch_idx];
        SeededRng rng = SeededRng(spec.seed).fork(static_cast<std::uint64_t>(idx));

        Ellipse e;
        e.a = rng.uniform(arch.axis_min, arch.axis_max);
        e.b = rng.uniform(arch.axis_min, e.a);
        e.theta = rng.uniform(0.0, 3.14159265358979323846);
        const double margin = e.a + 6.0;
        e.cx = rng.uniform(margin, s - 1 - margin);
        e.cy = rng.uniform(margin, s - 1 - margin);

        PhantomCase pc;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "lesion_%04d", idx);
        pc.lesion_id = buf;
        pc.archetype = arch_idx;
        pc.image = ImageGrid(s, s, arch.background_intensity);
        pc.gt_mask = BinaryMask(s, s);

        // Distractor blobs away from the lesion; background only, never GT.
        if (arch.background_blob_contrast > 0.0) {
            const int blob_count = 2 + static_cast<int>(rng.uniform_int(3));
            for (int bidx = 0; bidx < blob_count; ++bidx) {
                const double r = rng.uniform(3.0, 8.0);
                double bx = 0.0, by = 0.0;
                int tries = 0;
                do {
                    bx = rng.uniform(r + 1.0, s - 2.0 - r);
                    by = rng.uniform(r + 1.0, s - 2.0 - r);
                } while (std::hypot(bx - e.cx, by - e.cy) < e.a + r + 5.0 && ++tries < 50);
                if (tries >= 50) continue;
                const double v = std::clamp(
                    arch.background_intensity + arch.background_blob_contrast, 0.0, 1.0);
                for (int y = 0; y < s; ++y)
                    for (int x = 0; x < s; ++x)
                        if (std::hypot(x - bx, y - by) <= r) pc.image.at(x, y) = v;
            }
        }

        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                if (e.contains(x, y)) {
                    pc.gt_mask.at(x, y) = 1;
                    pc.image.at(x, y) = arch.lesion_intensity;
                }

        if (arch.texture_noise > 0.0)
            for (double& v : pc.image.data)
                v = std::clamp(v + rng.normal(0.0, arch.texture_noise), 0.0, 1.0);

        pc.annotation = recist_from_mask(pc.gt_mask, pc.lesion_id);
        cases.push_back(std::move(pc));
    }
    return cases;
}

}  // namespace coseg
