#pragma once

#include <map>
#include <optional>
#include <string>

#include "coseg/autodiff.hpp"
#include "coseg/clustering.hpp"
#include "coseg/grid.hpp"
#include "coseg/rng.hpp"
#include "coseg/tensor.hpp"

namespace coseg {

enum class EncoderVariant { VggS, ResnetS, DrnS };
enum class AttentionKind { None, Channel, ChannelSpatial };

EncoderVariant encoder_variant_from_string(const std::string& s);
AttentionKind attention_kind_from_string(const std::string& s);
std::string to_string(EncoderVariant v);
std::string to_string(AttentionKind a);

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::DrnS;
    // Stage channel widths, desk-scale defaults. drn-s removes the last two
    // strides and dilates instead (output stride 8); vgg-s/resnet-s keep
    // all strides (output stride 16 with four stages).
    std::vector<int> stage_channels = {4, 8, 16, 24};
    int decoder_channels = 8;

    void validate() const;
};

// Named parameters with matching gradient buffers; names unique,
// registration order fixed so seeded initialization reproduces.
class ParamStore {
public:
    int add(const std::string& name, Tensor init);
    int index_of(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::size_t count() const { return values_.size(); }
    const std::string& name(int i) const { return names_[i]; }
    Tensor& value(int i) { return values_[i]; }
    const Tensor& value(int i) const { return values_[i]; }
    Tensor& grad(int i) { return grads_[i]; }

    void zero_grads();

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::map<std::string, int> index_;
};

struct AdamConfig {
    double lr = 1e-5;       // reference value; desk-scale runs override
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0005;  // added as wd*theta into the gradient
};

class AdamState {
public:
    explicit AdamState(const ParamStore& params);
    // Bias-corrected Adam; L2 decay folded into the gradient first.
    void step(ParamStore& params, const AdamConfig& cfg);
    long step_count() const { return step_count_; }

private:
    std::vector<Tensor> m_, v_;
    long step_count_ = 0;
};

// The Siamese attention co-segmentation network. Weights live in the
// ParamStore; each forward call records a fresh graph.
class CosegNet {
public:
    CosegNet(const EncoderConfig& enc, AttentionKind attention, SeededRng& rng);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const EncoderConfig& encoder_config() const { return enc_; }
    AttentionKind attention() const { return attention_; }

    struct SiameseOut {
        Graph::NodeId logits_a = -1;
        Graph::NodeId logits_b = -1;
        std::vector<int> param_nodes;  // param index -> graph node
    };
    // Inputs [N,1,H,W]; logits [N,2,H,W].
    SiameseOut forward_siamese(Graph& g, const Tensor& img_a, const Tensor& img_b) const;

    struct SingleOut {
        Graph::NodeId logits = -1;
        std::vector<int> param_nodes;
    };
    // Single-branch baseline: same operator stack, one branch, no attention.
    SingleOut forward_single(Graph& g, const Tensor& img) const;

    // Copies accumulated graph gradients back into the store.
    void collect_grads(Graph& g, const std::vector<int>& param_nodes);

    // Foreground probability maps (softmax of the logits), values in [0,1].
    std::pair<Tensor, Tensor> infer_pair(const Tensor& img_a, const Tensor& img_b) const;
    Tensor infer_single(const Tensor& img) const;

private:
    Graph::NodeId encode(Graph& g, Graph::NodeId x, const std::vector<int>& pnodes) const;
    Graph::NodeId decode(Graph& g, Graph::NodeId feat, int out_h, int out_w,
                         const std::vector<int>& pnodes) const;
    std::vector<int> inject_params(Graph& g) const;

    EncoderConfig enc_;
    AttentionKind attention_;
    ParamStore params_;
};

// --- checkpoint format ---
// Little-endian flat binary: magic "CSGN", u32 version, u64 parameter
// count; per parameter: u32 name length, name bytes, u32 rank, u32 extents,
// float32 payload.
void save_checkpoint(const std::string& path, const ParamStore& params);
void load_checkpoint(const std::string& path, ParamStore& params);

// --- trainer ---

struct TrainConfig {
    int batch_size = 2;            // pairs per iteration
    int iterations = 1000;         // total training iterations
    int val_interval = 100;        // best-val-Dice checkpoint cadence
    std::uint64_t seed = 0;
    AdamConfig adam{.lr = 1e-3};   // desk-scale learning rate
    AttentionKind attention = AttentionKind::Channel;
    EncoderConfig encoder;
    bool single_branch_baseline = false;

    void validate() const;
};

// Preprocessed training example: image tensor [1,H,W] flattened into the
// batch layout on demand, plus its (weak) target mask.
struct TrainSample {
    Tensor image;      // [1,1,H,W]
    BinaryMask mask;   // H x W
};

using SampleMap = std::map<std::string, TrainSample>;

struct LossCurvePoint {
    int iteration;
    double train_loss;
    double val_dice;  // NaN when not evaluated this iteration
};

struct TrainResult {
    std::vector<LossCurvePoint> curve;
    double best_val_dice = 0.0;
};

// Seeded shuffled batches; per-iteration loss = mean of both branches'
// cross-entropy vs the initial GrabCut masks; keeps the checkpoint with the
// best validation Dice inside `net`.
TrainResult train_pairs(CosegNet& net, const PairSet& train_pairs, const PairSet& val_pairs,
                        const SampleMap& samples, const TrainConfig& cfg);

// Single-branch variant over individual lesions.
TrainResult train_single(CosegNet& net, const std::vector<std::string>& train_ids,
                         const std::vector<std::string>& val_ids, const SampleMap& samples,
                         const TrainConfig& cfg);

void write_loss_curve_csv(const std::string& path, const std::vector<LossCurvePoint>& curve);

}  // namespace coseg
