#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "coseg/grid.hpp"
#include "coseg/recist.hpp"
#include "coseg/rng.hpp"

namespace coseg {

// Handcrafted appearance descriptor: 32-bin normalized intensity histogram
// over the RECIST bounding box, major/minor lengths, aspect ratio, bbox
// mean and std intensity. D = 37.
inline constexpr int kFeatureDim = 37;

struct LesionFeature {
    std::string lesion_id;
    std::vector<double> vector;  // size kFeatureDim (or external embedding dim)
};

LesionFeature extract_feature(const ImageGrid& img, const RecistAnnotation& ann);

struct ClusterModel {
    int k = 0;
    std::vector<std::vector<double>> centroids;
    std::map<std::string, int> assignments;  // lesion_id -> cluster
    double inertia = 0.0;
};

struct KmeansTrace {
    std::vector<double> inertia_per_iteration;
};

// k-means++ seeding, Lloyd iterations; empty clusters are re-seeded from
// the farthest point. Inertia is non-increasing per iteration.
ClusterModel kmeans(const std::vector<LesionFeature>& features, int k, int iterations,
                    SeededRng& rng, KmeansTrace* trace = nullptr);

struct DatasetSplit {
    std::vector<std::string> train, val, test;
};

// Largest-remainder allocation within each cluster; shuffling seeded; ties
// broken in (train, val, test) order.
DatasetSplit stratified_split(const ClusterModel& model, const std::array<double, 3>& ratios,
                              SeededRng& rng);

struct LesionPair {
    std::string a, b;
    int cluster = 0;
};

struct PairSet {
    std::string split_tag;  // "train" / "val" / "test"
    std::vector<LesionPair> pairs;
};

// All unordered within-cluster, within-split pairs; if cap_per_cluster > 0,
// a seeded uniform sample of that many per cluster.
PairSet make_pairs(const std::vector<std::string>& split_members, const std::string& split_tag,
                   const ClusterModel& model, int cap_per_cluster, SeededRng& rng);

// Cross-cluster control pairing for the ablation run: same pair count per
// split member budget, but partners drawn uniformly from the whole split.
PairSet make_random_pairs(const std::vector<std::string>& split_members,
                          const std::string& split_tag, std::size_t pair_count, SeededRng& rng);

// CSV persistence.
void write_features_csv(const std::string& path, const std::vector<LesionFeature>& features);
std::vector<LesionFeature> read_features_csv(const std::string& path);
void write_cluster_csv(const std::string& path, const ClusterModel& model);
ClusterModel read_cluster_csv(const std::string& path);
void write_split_csv(const std::string& path, const DatasetSplit& split);
DatasetSplit read_split_csv(const std::string& path);
void write_pairs_csv(const std::string& path, const PairSet& pairs);
PairSet read_pairs_csv(const std::string& path);

}  // namespace coseg
