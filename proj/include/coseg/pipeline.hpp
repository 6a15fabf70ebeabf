#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "coseg/clustering.hpp"
#include "coseg/crf.hpp"
#include "coseg/grid.hpp"
#include "coseg/metrics.hpp"
#include "coseg/net.hpp"
#include "coseg/phantom.hpp"
#include "coseg/recist.hpp"

namespace coseg {

struct PreprocessConfig {
    int target_size = 128;
    std::string normalization = "minmax";  // the only implemented mode
};

struct ClusteringConfig {
    int k = 4;
    std::string feature_mode = "handcrafted";  // or "csv" with features_csv set
    std::string features_csv;
    int cap_per_cluster = 0;  // 0 = all pairs
    int kmeans_iterations = 50;
};

struct CrfStageConfig {
    CrfParams params;
    int downsample_factor = 2;
};

struct PipelineConfig {
    std::string images_dir;       // PNG per lesion: <id>.png
    std::string annotations_csv;  // RECIST CSV
    std::string output_dir;
    PreprocessConfig preprocess;
    GrabcutConfig grabcut;
    ClusteringConfig clustering;
    TrainConfig train;
    CrfStageConfig crf;
    PhantomSpec phantom;
    std::string pairing = "cluster";  // "cluster" or "random" (ablation)
    std::uint64_t seed = 0;

    void validate() const;
};

PipelineConfig load_config(const std::string& path);
void save_config(const std::string& path, const PipelineConfig& cfg);
// Canonical-serialization hash used by the stage manifests.
std::uint64_t config_hash(const PipelineConfig& cfg);

// Per-stage manifest: config hash, input file hashes, produced outputs.
// Stages verify their upstream manifests and refuse to run on a config
// mismatch unless forced.
struct StageOptions {
    bool force = false;
};

std::uint64_t hash_file(const std::string& path);

void cmd_phantom(const PipelineConfig& cfg, const StageOptions& opt);
void cmd_gen_masks(const PipelineConfig& cfg, const StageOptions& opt);
void cmd_cluster(const PipelineConfig& cfg, const StageOptions& opt);
void cmd_split(const PipelineConfig& cfg, const StageOptions& opt);
void cmd_pair(const PipelineConfig& cfg, const StageOptions& opt);
void cmd_train(const PipelineConfig& cfg, const StageOptions& opt);
void cmd_infer(const PipelineConfig& cfg, const StageOptions& opt);
void cmd_refine(const PipelineConfig& cfg, const StageOptions& opt);
// Returns the aggregate report; pred_dir selects which masks to score
// ("refined", "pred", or "masks_init").
EvalReport cmd_evaluate(const PipelineConfig& cfg, const StageOptions& opt,
                        const std::string& pred_dir);
void cmd_overlay(const PipelineConfig& cfg, const StageOptions& opt, const std::string& pred_dir);

// Runs every stage in order; the one-command end-to-end driver.
EvalReport run_full_pipeline(const PipelineConfig& cfg, const StageOptions& opt);

// --- helpers shared with tests and the acceptance suite ---

struct PreprocessedCase {
    int orig_w = 0, orig_h = 0;
    int pad_x0 = 0, pad_y0 = 0;  // placement of the original in the square
    Tensor image;                // [1,1,T,T], normalized
    BinaryMask mask;             // T x T weak-label mask
};

PreprocessedCase preprocess_case(const ImageGrid& img, const BinaryMask& mask, int target_size);
// Maps a T x T probability map back to original image coordinates.
ImageGrid prob_to_original(const ImageGrid& prob, const PreprocessedCase& prep);

// Contour = mask pixels adjacent (8-neighborhood) to background or border.
BinaryMask mask_contour(const BinaryMask& mask);
// Side-by-side grayscale panels with prediction (red) and GT (green)
// contours burned in.
void write_overlay_png(const std::string& path, const ImageGrid& img, const BinaryMask& pred,
                       const BinaryMask& gt);

}  // namespace coseg
