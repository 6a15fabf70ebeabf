#include "coseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace coseg {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("confusion: mask dimension mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.labels[i] != 0;
        const bool t = gt.labels[i] != 0;
        c.tp += p && t;
        c.fp += p && !t;
        c.fn += !p && t;
        c.tn += !p && !t;
    }
    return c;
}

double recall(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) return c.fp == 0 ? 1.0 : 0.0;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double precision(const ConfusionCounts& c) {
    if (c.tp + c.fp == 0) return c.fn == 0 ? 1.0 : 0.0;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double dice(const ConfusionCounts& c) {
    const long denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;  // empty vs empty
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double volumetric_similarity(const ConfusionCounts& c) {
    const long denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;
    return 1.0 - static_cast<double>(std::abs(c.fn - c.fp)) / static_cast<double>(denom);
}

// Felzenszwalb-Huttenlocher exact squared EDT: 1-D lower-envelope passes
// over columns then rows.
namespace {

void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> distance_transform_sq(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> grid(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) grid[i] = mask.labels[i] ? 0.0 : inf;

    const int m = std::max(w, h);
    std::vector<double> f(m), d(m), z(m + 1);
    std::vector<int> v(m);

    // Column pass over the binary input: distance to the nearest zero in
    // the column by a down/up scan (envelope math would choke on the
    // infinities of all-background columns).
    for (int x = 0; x < w; ++x) {
        double dist = inf;
        for (int y = 0; y < h; ++y) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            dist = grid[i] == 0.0 ? 0.0 : (std::isfinite(dist) ? dist + 1.0 : inf);
            grid[i] = dist;
        }
        dist = inf;
        for (int y = h - 1; y >= 0; --y) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            dist = grid[i] == 0.0 ? 0.0 : (std::isfinite(dist) ? dist + 1.0 : dist);
            grid[i] = std::min(grid[i], dist);
        }
        for (int y = 0; y < h; ++y) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (std::isfinite(grid[i])) grid[i] *= grid[i];
        }
    }
    for (int y = 0; y < h; ++y) {  // rows
        bool finite = false;
        for (int x = 0; x < w; ++x) {
            f[x] = grid[static_cast<std::size_t>(y) * w + x];
            finite |= std::isfinite(f[x]);
        }
        if (!finite) continue;
        // Replace infinities so the envelope math stays finite; any value
        // much larger than the max possible squared distance works.
        const double big = 2.0 * (static_cast<double>(w) * w + static_cast<double>(h) * h);
        std::vector<double> fx(f.begin(), f.begin() + w);
        for (double& vv : fx)
            if (!std::isfinite(vv)) vv = big;
        edt_1d(fx, d, v, z);
        for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[x];
    }
    return grid;
}

double averaged_hausdorff(const BinaryMask& pred, const BinaryMask& gt,
                          AvdConvention convention) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("averaged_hausdorff: mask dimension mismatch");
    const std::size_t na = pred.count(), nb = gt.count();
    if (na == 0 || nb == 0) throw std::runtime_error("AVD undefined for empty set");

    const std::vector<double> dt_gt = distance_transform_sq(gt);
    const std::vector<double> dt_pred = distance_transform_sq(pred);

    double d_ab = 0.0, d_ba = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred.labels[i]) d_ab += std::sqrt(dt_gt[i]);
        if (gt.labels[i]) d_ba += std::sqrt(dt_pred[i]);
    }
    d_ab /= static_cast<double>(na);
    d_ba /= static_cast<double>(nb);
    return convention == AvdConvention::MaxOfDirected ? std::max(d_ab, d_ba)
                                                      : 0.5 * (d_ab + d_ba);
}

CaseMetrics evaluate_case(const std::string& case_id, const BinaryMask& pred,
                          const BinaryMask& gt, AvdConvention convention) {
    const ConfusionCounts c = confusion(pred, gt);
    CaseMetrics m;
    m.case_id = case_id;
    m.recall = recall(c);
    m.precision = precision(c);
    m.dice = dice(c);
    m.vs = volumetric_similarity(c);
    if (pred.count() > 0 && gt.count() > 0) m.avd = averaged_hausdorff(pred, gt, convention);
    return m;
}

namespace {

MetricAggregate aggregate_values(const std::vector<double>& values) {
    MetricAggregate a;
    a.count = values.size();
    if (values.empty()) return a;
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return a;
}

}  // namespace

EvalReport aggregate(const std::vector<CaseMetrics>& cases) {
    if (cases.empty()) throw std::invalid_argument("aggregate: need at least one case");
    EvalReport r;
    r.cases = cases;
    std::vector<double> rec, prec, dc, vs, avd;
    for (const auto& c : cases) {
        rec.push_back(c.recall);
        prec.push_back(c.precision);
        dc.push_back(c.dice);
        vs.push_back(c.vs);
        if (c.avd)
            avd.push_back(*c.avd);
        else
            ++r.avd_missing;
    }
    r.recall = aggregate_values(rec);
    r.precision = aggregate_values(prec);
    r.dice = aggregate_values(dc);
    r.vs = aggregate_values(vs);
    r.avd = aggregate_values(avd);
    return r;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report CSV: " + path);
    out.precision(17);
    out << "case_id,recall,precision,dice,avd,vs\n";
    for (const auto& c : report.cases) {
        out << c.case_id << ',' << c.recall << ',' << c.precision << ',' << c.dice << ',';
        if (c.avd) out << *c.avd;
        out << ',' << c.vs << '\n';
    }
    out << "mean," << report.recall.mean << ',' << report.precision.mean << ','
        << report.dice.mean << ',' << report.avd.mean << ',' << report.vs.mean << '\n';
}

void write_report_json(const std::string& path, const EvalReport& report) {
    nlohmann::ordered_json j;
    auto agg = [](const MetricAggregate& a) {
        return nlohmann::ordered_json{{"mean", a.mean}, {"std", a.stddev}, {"count", a.count}};
    };
    j["recall"] = agg(report.recall);
    j["precision"] = agg(report.precision);
    j["dice"] = agg(report.dice);
    j["avd"] = agg(report.avd);
    j["vs"] = agg(report.vs);
    j["avd_missing_cases"] = report.avd_missing;
    j["case_count"] = report.cases.size();
    nlohmann::ordered_json cases = nlohmann::ordered_json::array();
    for (const auto& c : report.cases) {
        nlohmann::ordered_json e{{"case_id", c.case_id},
                                 {"recall", c.recall},
                                 {"precision", c.precision},
                                 {"dice", c.dice},
                                 {"vs", c.vs}};
        if (c.avd) e["avd"] = *c.avd;
        cases.push_back(std::move(e));
    }
    j["cases"] = std::move(cases);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report JSON: " + path);
    out << j.dump(2) << '\n';
}

std::string format_report_table(const EvalReport& report, const std::string& model_name) {
    std::ostringstream os;
    auto cell = [](const MetricAggregate& a) {
        std::ostringstream c;
        c.setf(std::ios::fixed);
        c.precision(3);
        c << a.mean << " ± " << a.stddev;
        return c.str();
    };
    os << "Model | Recall | Precision | Dice | AVD | VS\n";
    os << model_name << " | " << cell(report.recall) << " | " << cell(report.precision) << " | "
       << cell(report.dice) << " | " << cell(report.avd) << " | " << cell(report.vs) << "\n";
    return os.str();
}

}  // namespace coseg
