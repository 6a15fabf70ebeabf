#pragma once

#include <optional>
#include <string>
#include <vector>

#include "coseg/grid.hpp"

namespace coseg {

struct ConfusionCounts {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    long total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

// Empty-vs-empty masks score 1 by convention for all three.
double recall(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double dice(const ConfusionCounts& c);

// VS = 1 - |FN-FP| / (2TP+FP+FN); 1 for empty-vs-empty.
double volumetric_similarity(const ConfusionCounts& c);

enum class AvdConvention {
    MaxOfDirected,   // max(d(A,B), d(B,A)) -- the default
    MeanOfDirected,  // (d(A,B) + d(B,A)) / 2
};

// Averaged Hausdorff distance between foreground pixel sets, Euclidean
// pixel units, computed via an exact distance transform. Throws
// "AVD undefined for empty set" when either mask is empty.
double averaged_hausdorff(const BinaryMask& pred, const BinaryMask& gt,
                          AvdConvention convention = AvdConvention::MaxOfDirected);

// Exact Euclidean distance transform (squared distances) to the nearest
// foreground pixel; infinity where the mask is empty.
std::vector<double> distance_transform_sq(const BinaryMask& mask);

struct CaseMetrics {
    std::string case_id;
    double recall = 0.0, precision = 0.0, dice = 0.0, vs = 0.0;
    std::optional<double> avd;  // missing when either mask is empty
};

CaseMetrics evaluate_case(const std::string& case_id, const BinaryMask& pred,
                          const BinaryMask& gt,
                          AvdConvention convention = AvdConvention::MaxOfDirected);

struct MetricAggregate {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
    std::size_t count = 0;
};

struct EvalReport {
    std::vector<CaseMetrics> cases;
    MetricAggregate recall, precision, dice, vs, avd;
    std::size_t avd_missing = 0;  // cases excluded from the AVD aggregate
};

EvalReport aggregate(const std::vector<CaseMetrics>& cases);

void write_report_csv(const std::string& path, const EvalReport& report);
void write_report_json(const std::string& path, const EvalReport& report);
// Table-style grid: one row of "mean ± std" per metric.
std::string format_report_table(const EvalReport& report, const std::string& model_name);

}  // namespace coseg
