#include "coseg/recist.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coseg {

double Segment::length() const { return std::hypot(b.x - a.x, b.y - a.y); }

namespace {

// Closest-approach distance between two segments (0 when they intersect).
double segment_gap(const Segment& s, const Segment& t) {
    auto dot = [](Point u, Point v) { return u.x * v.x + u.y * v.y; };
    auto sub = [](Point u, Point v) { return Point{u.x - v.x, u.y - v.y}; };
    auto cross = [](Point u, Point v) { return u.x * v.y - u.y * v.x; };
    const Point d1 = sub(s.b, s.a), d2 = sub(t.b, t.a), r = sub(t.a, s.a);
    const double denom = cross(d1, d2);
    if (std::abs(denom) > 1e-12) {
        const double u = cross(r, d2) / denom;
        const double v = cross(r, d1) / denom;
        if (u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0) return 0.0;
    }
    auto point_seg = [&](Point p, const Segment& g) {
        const Point d = sub(g.b, g.a);
        const double len2 = dot(d, d);
        double tt = len2 > 0.0 ? std::clamp(dot(sub(p, g.a), d) / len2, 0.0, 1.0) : 0.0;
        const Point q{g.a.x + tt * d.x, g.a.y + tt * d.y};
        return std::hypot(p.x - q.x, p.y - q.y);
    };
    return std::min({point_seg(s.a, t), point_seg(s.b, t), point_seg(t.a, s), point_seg(t.b, s)});
}

}  // namespace

void RecistAnnotation::validate(double cross_tolerance) const {
    if (minor.length() <= 0.0) throw std::invalid_argument("degenerate RECIST: zero-length diameter");
    if (major.length() < minor.length())
        throw std::invalid_argument("degenerate RECIST: major shorter than minor");
    if (segment_gap(major, minor) > cross_tolerance)
        throw std::invalid_argument("degenerate RECIST: diameters do not cross");
}

void GrabcutConfig::validate() const {
    if (gmm_components < 1 || grabcut_iterations < 1 || smoothness_gamma <= 0.0 ||
        bbox_expand < 1 || gmm_em_iterations < 1)
        throw std::invalid_argument("GrabcutConfig: all fields must be positive");
    if (fg_seed_shrink <= 0.0 || fg_seed_shrink > 1.0)
        throw std::invalid_argument("GrabcutConfig: fg_seed_shrink must be in (0,1]");
    if (neighbor_system != 4 && neighbor_system != 8)
        throw std::invalid_argument("GrabcutConfig: neighbor_system must be 4 or 8");
}

namespace {

// Even-odd point-in-polygon on the pixel center.
bool inside_polygon(const std::vector<Point>& poly, double px, double py) {
    bool in = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = poly[i];
        const Point& b = poly[j];
        if ((a.y > py) != (b.y > py)) {
            const double xint = a.x + (py - a.y) / (b.y - a.y) * (b.x - a.x);
            if (px < xint) in = !in;
        }
    }
    return in;
}

}  // namespace

Trimap trimap_from_recist(const RecistAnnotation& ann, int width, int height,
                          const GrabcutConfig& cfg) {
    cfg.validate();
    ann.validate();

    const Point pts[4] = {ann.major.a, ann.major.b, ann.minor.a, ann.minor.b};
    for (const Point& p : pts)
        if (p.x < 0.0 || p.y < 0.0 || p.x > width - 1.0 || p.y > height - 1.0)
            throw std::invalid_argument("annotation out of bounds");

    // Quadrilateral through the four endpoints, ordered by angle around the
    // centroid. Collinear endpoints have zero area and are rejected.
    Point c{(pts[0].x + pts[1].x + pts[2].x + pts[3].x) / 4.0,
            (pts[0].y + pts[1].y + pts[2].y + pts[3].y) / 4.0};
    std::vector<Point> quad(pts, pts + 4);
    std::sort(quad.begin(), quad.end(), [&](const Point& a, const Point& b) {
        return std::atan2(a.y - c.y, a.x - c.x) < std::atan2(b.y - c.y, b.x - c.x);
    });
    double area2 = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Point& a = quad[i];
        const Point& b = quad[(i + 1) % 4];
        area2 += a.x * b.y - b.x * a.y;
    }
    if (std::abs(area2) < 1e-9) throw std::invalid_argument("degenerate RECIST: collinear endpoints");

    std::vector<Point> shrunk(4);
    for (int i = 0; i < 4; ++i)
        shrunk[i] = Point{c.x + cfg.fg_seed_shrink * (quad[i].x - c.x),
                          c.y + cfg.fg_seed_shrink * (quad[i].y - c.y)};

    double bx0 = pts[0].x, bx1 = pts[0].x, by0 = pts[0].y, by1 = pts[0].y;
    for (const Point& p : pts) {
        bx0 = std::min(bx0, p.x);
        bx1 = std::max(bx1, p.x);
        by0 = std::min(by0, p.y);
        by1 = std::max(by1, p.y);
    }
    bx0 -= cfg.bbox_expand;
    bx1 += cfg.bbox_expand;
    by0 -= cfg.bbox_expand;
    by1 += cfg.bbox_expand;

    Trimap tm(width, height, TrimapLabel::ProbableBG);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double px = x, py = y;
            if (inside_polygon(shrunk, px, py))
                tm.at(x, y) = TrimapLabel::DefiniteFG;
            else if (inside_polygon(quad, px, py))
                tm.at(x, y) = TrimapLabel::ProbableFG;
            else if (px < bx0 || px > bx1 || py < by0 || py > by1)
                tm.at(x, y) = TrimapLabel::DefiniteBG;
        }
    }
    // Shrinking can rasterize to nothing on tiny lesions; fall back to the
    // pixel nearest the centroid.
    bool has_fg = false;
    for (auto l : tm.labels) has_fg |= (l == TrimapLabel::DefiniteFG);
    if (!has_fg) {
        const int cx = std::clamp(static_cast<int>(std::lround(c.x)), 0, width - 1);
        const int cy = std::clamp(static_cast<int>(std::lround(c.y)), 0, height - 1);
        tm.at(cx, cy) = TrimapLabel::DefiniteFG;
    }
    tm.validate();
    return tm;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
        // trim spaces
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace

std::vector<RecistRecord> read_recist_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open RECIST CSV: " + path);
    std::vector<RecistRecord> records;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (first) {
            first = false;
            if (!f.empty() && f[0] == "image_path") continue;  // header
        }
        if (f.size() != 10)
            throw std::runtime_error("RECIST CSV: expected 10 columns, got " +
                                     std::to_string(f.size()) + " in: " + line);
        RecistRecord r;
        r.image_path = f[0];
        r.lesion_id = f[1];
        r.annotation.image_id = f[1];
        r.annotation.major = {{std::stod(f[2]), std::stod(f[3])}, {std::stod(f[4]), std::stod(f[5])}};
        r.annotation.minor = {{std::stod(f[6]), std::stod(f[7])}, {std::stod(f[8]), std::stod(f[9])}};
        records.push_back(std::move(r));
    }
    return records;
}

void write_recist_csv(const std::string& path, const std::vector<RecistRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write RECIST CSV: " + path);
    out << "image_path,lesion_id,x11,y11,x12,y12,x21,y21,x22,y22\n";
    out.precision(17);
    for (const auto& r : records) {
        out << r.image_path << ',' << r.lesion_id << ',' << r.annotation.major.a.x << ','
            << r.annotation.major.a.y << ',' << r.annotation.major.b.x << ','
            << r.annotation.major.b.y << ',' << r.annotation.minor.a.x << ','
            << r.annotation.minor.a.y << ',' << r.annotation.minor.b.x << ','
            << r.annotation.minor.b.y << '\n';
    }
}

}  // namespace coseg
