#include "coseg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace coseg {

LesionFeature extract_feature(const ImageGrid& img, const RecistAnnotation& ann) {
    const Point pts[4] = {ann.major.a, ann.major.b, ann.minor.a, ann.minor.b};
    double bx0 = pts[0].x, bx1 = pts[0].x, by0 = pts[0].y, by1 = pts[0].y;
    for (const Point& p : pts) {
        bx0 = std::min(bx0, p.x);
        bx1 = std::max(bx1, p.x);
        by0 = std::min(by0, p.y);
        by1 = std::max(by1, p.y);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(bx0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(by0)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(bx1)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(by1)));
    if (x1 < x0 || y1 < y0) throw std::runtime_error("extract_feature: degenerate RECIST bbox");

    constexpr int kBins = 32;
    std::vector<double> hist(kBins, 0.0);
    double sum = 0.0, sum2 = 0.0;
    long n = 0;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double v = std::clamp(img.at(x, y), 0.0, 1.0);
            int bin = std::min(kBins - 1, static_cast<int>(v * kBins));
            hist[bin] += 1.0;
            sum += v;
            sum2 += v * v;
            ++n;
        }
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);

    LesionFeature f;
    f.lesion_id = ann.image_id;
    f.vector.reserve(kFeatureDim);
    for (double h : hist) f.vector.push_back(h / static_cast<double>(n));
    const double major_len = ann.major.length();
    const double minor_len = ann.minor.length();
    f.vector.push_back(major_len);
    f.vector.push_back(minor_len);
    f.vector.push_back(minor_len > 0.0 ? major_len / minor_len : 0.0);
    f.vector.push_back(mean);
    f.vector.push_back(std::sqrt(var));
    return f;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

ClusterModel kmeans(const std::vector<LesionFeature>& features, int k, int iterations,
                    SeededRng& rng, KmeansTrace* trace) {
    const std::size_t n = features.size();
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (n < static_cast<std::size_t>(k)) throw std::runtime_error("kmeans: fewer points than k");
    const std::size_t dim = features[0].vector.size();
    for (const auto& f : features)
        if (f.vector.size() != dim)
            throw std::invalid_argument("kmeans: inconsistent feature dimensions");

    ClusterModel model;
    model.k = k;
    model.centroids.resize(k);

    // k-means++ seeding.
    model.centroids[0] = features[rng.uniform_int(n)].vector;
    std::vector<double> d2(n);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < c; ++j)
                best = std::min(best, sq_dist(features[i].vector, model.centroids[j]));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = rng.uniform_int(n);
        if (total > 0.0) {
            double r = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        model.centroids[c] = features[pick].vector;
    }

    std::vector<int> assign(n, 0);
    auto assign_all = [&]() {
        double inertia = 0.0;
        // Parallelizable over points; reduction stays in fixed point order.
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (int c = 0; c < k; ++c) {
                const double d = sq_dist(features[i].vector, model.centroids[c]);
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            assign[i] = best_c;
            inertia += best;
        }
        return inertia;
    };

    double inertia = assign_all();
    for (int iter = 0; iter < iterations; ++iter) {
        // M-step: recompute centroids.
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<long> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += features[i].vector[d];
            ++counts[assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Re-seed an empty cluster from the farthest point.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = sq_dist(features[i].vector, model.centroids[assign[i]]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                model.centroids[c] = features[far].vector;
            } else {
                for (std::size_t d = 0; d < dim; ++d)
                    model.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
            }
        }
        const double new_inertia = assign_all();
        if (trace) trace->inertia_per_iteration.push_back(new_inertia);
        if (new_inertia == inertia) {
            inertia = new_inertia;
            break;
        }
        inertia = new_inertia;
    }

    model.inertia = inertia;
    for (std::size_t i = 0; i < n; ++i) model.assignments[features[i].lesion_id] = assign[i];
    return model;
}

DatasetSplit stratified_split(const ClusterModel& model, const std::array<double, 3>& ratios,
                              SeededRng& rng) {
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw std::invalid_argument("stratified_split: ratios must sum to 1");

    // Members per cluster, in deterministic (sorted-id) order before the
    // seeded shuffle.
    std::vector<std::vector<std::string>> clusters(model.k);
    for (const auto& [id, c] : model.assignments) clusters[c].push_back(id);

    DatasetSplit split;
    std::vector<std::string>* outs[3] = {&split.train, &split.val, &split.test};
    for (auto& members : clusters) {
        rng.shuffle(members);
        const std::size_t m = members.size();
        // Largest-remainder rounding; ties broken in (train, val, test) order.
        std::size_t counts[3];
        double rem[3];
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double exact = ratios[s] * static_cast<double>(m);
            counts[s] = static_cast<std::size_t>(exact);
            rem[s] = exact - static_cast<double>(counts[s]);
            assigned += counts[s];
        }
        while (assigned < m) {
            int best = 0;
            for (int s = 1; s < 3; ++s)
                if (rem[s] > rem[best]) best = s;
            ++counts[best];
            rem[best] = -1.0;
            ++assigned;
        }
        std::size_t idx = 0;
        for (int s = 0; s < 3; ++s)
            for (std::size_t j = 0; j < counts[s]; ++j) outs[s]->push_back(members[idx++]);
    }
    for (auto* v : outs) std::sort(v->begin(), v->end());
    // On tiny datasets rounding can leave val or test empty; every split must
    // stay usable, so move the last train members over when that happens.
    for (int s = 1; s < 3; ++s)
        if (outs[s]->empty() && split.train.size() >= 2) {
            outs[s]->push_back(split.train.back());
            split.train.pop_back();
        }
    return split;
}

PairSet make_pairs(const std::vector<std::string>& split_members, const std::string& split_tag,
                   const ClusterModel& model, int cap_per_cluster, SeededRng& rng) {
    std::vector<std::vector<std::string>> clusters(model.k);
    for (const auto& id : split_members) {
        const auto it = model.assignments.find(id);
        if (it == model.assignments.end())
            throw std::runtime_error("make_pairs: lesion not in cluster model: " + id);
        clusters[it->second].push_back(id);
    }
    PairSet out;
    out.split_tag = split_tag;
    for (int c = 0; c < model.k; ++c) {
        auto& members = clusters[c];
        std::sort(members.begin(), members.end());
        std::vector<LesionPair> cluster_pairs;
        for (std::size_t i = 0; i < members.size(); ++i)
            for (std::size_t j = i + 1; j < members.size(); ++j)
                cluster_pairs.push_back({members[i], members[j], c});
        if (cap_per_cluster > 0 &&
            cluster_pairs.size() > static_cast<std::size_t>(cap_per_cluster)) {
            rng.shuffle(cluster_pairs);
            cluster_pairs.resize(cap_per_cluster);
            std::sort(cluster_pairs.begin(), cluster_pairs.end(),
                      [](const LesionPair& a, const LesionPair& b) {
                          return std::tie(a.a, a.b) < std::tie(b.a, b.b);
                      });
        }
        out.pairs.insert(out.pairs.end(), cluster_pairs.begin(), cluster_pairs.end());
    }
    return out;
}

PairSet make_random_pairs(const std::vector<std::string>& split_members,
                          const std::string& split_tag, std::size_t pair_count, SeededRng& rng) {
    PairSet out;
    out.split_tag = split_tag;
    if (split_members.size() < 2) return out;
    std::set<std::pair<std::string, std::string>> seen;
    const std::size_t max_pairs = split_members.size() * (split_members.size() - 1) / 2;
    pair_count = std::min(pair_count, max_pairs);
    while (out.pairs.size() < pair_count) {
        const auto i = rng.uniform_int(split_members.size());
        auto j = rng.uniform_int(split_members.size());
        if (i == j) continue;
        std::string a = split_members[std::min(i, j)];
        std::string b = split_members[std::max(i, j)];
        if (a > b) std::swap(a, b);
        if (!seen.insert({a, b}).second) continue;
        out.pairs.push_back({a, b, -1});
    }
    return out;
}

// --- CSV persistence ---

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out.precision(17);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return in;
}

}  // namespace

void write_features_csv(const std::string& path, const std::vector<LesionFeature>& features) {
    auto out = open_out(path);
    out << "lesion_id,features...\n";
    for (const auto& f : features) {
        out << f.lesion_id;
        for (double v : f.vector) out << ',' << v;
        out << '\n';
    }
}

std::vector<LesionFeature> read_features_csv(const std::string& path) {
    auto in = open_in(path);
    std::vector<LesionFeature> features;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_line(line);
        LesionFeature lf;
        lf.lesion_id = f[0];
        for (std::size_t i = 1; i < f.size(); ++i) lf.vector.push_back(std::stod(f[i]));
        features.push_back(std::move(lf));
    }
    return features;
}

void write_cluster_csv(const std::string& path, const ClusterModel& model) {
    auto out = open_out(path);
    out << "k," << model.k << ",inertia," << model.inertia << '\n';
    for (const auto& c : model.centroids) {
        out << "centroid";
        for (double v : c) out << ',' << v;
        out << '\n';
    }
    for (const auto& [id, c] : model.assignments) out << "assign," << id << ',' << c << '\n';
}

ClusterModel read_cluster_csv(const std::string& path) {
    auto in = open_in(path);
    ClusterModel model;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_line(line);
        if (f[0] == "k") {
            model.k = std::stoi(f[1]);
            model.inertia = std::stod(f[3]);
        } else if (f[0] == "centroid") {
            std::vector<double> c;
            for (std::size_t i = 1; i < f.size(); ++i) c.push_back(std::stod(f[i]));
            model.centroids.push_back(std::move(c));
        } else if (f[0] == "assign") {
            model.assignments[f[1]] = std::stoi(f[2]);
        }
    }
    return model;
}

void write_split_csv(const std::string& path, const DatasetSplit& split) {
    auto out = open_out(path);
    out << "lesion_id,split\n";
    for (const auto& id : split.train) out << id << ",train\n";
    for (const auto& id : split.val) out << id << ",val\n";
    for (const auto& id : split.test) out << id << ",test\n";
}

DatasetSplit read_split_csv(const std::string& path) {
    auto in = open_in(path);
    DatasetSplit split;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_line(line);
        if (f[1] == "train")
            split.train.push_back(f[0]);
        else if (f[1] == "val")
            split.val.push_back(f[0]);
        else if (f[1] == "test")
            split.test.push_back(f[0]);
        else
            throw std::runtime_error("split CSV: unknown split tag " + f[1]);
    }
    return split;
}

void write_pairs_csv(const std::string& path, const PairSet& pairs) {
    auto out = open_out(path);
    out << "lesion_id_a,lesion_id_b,cluster,split\n";
    for (const auto& p : pairs.pairs)
        out << p.a << ',' << p.b << ',' << p.cluster << ',' << pairs.split_tag << '\n';
}

PairSet read_pairs_csv(const std::string& path) {
    auto in = open_in(path);
    PairSet ps;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_line(line);
        ps.pairs.push_back({f[0], f[1], std::stoi(f[2])});
        ps.split_tag = f[3];
    }
    return ps;
}

}  // namespace coseg
