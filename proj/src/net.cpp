#include "coseg/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace coseg {

EncoderVariant encoder_variant_from_string(const std::string& s) {
    if (s == "vgg-s") return EncoderVariant::VggS;
    if (s == "resnet-s") return EncoderVariant::ResnetS;
    if (s == "drn-s") return EncoderVariant::DrnS;
    throw std::invalid_argument("unknown encoder variant: " + s);
}

AttentionKind attention_kind_from_string(const std::string& s) {
    if (s == "none") return AttentionKind::None;
    if (s == "channel") return AttentionKind::Channel;
    if (s == "channel_spatial") return AttentionKind::ChannelSpatial;
    throw std::invalid_argument("unknown attention kind: " + s);
}

std::string to_string(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::VggS: return "vgg-s";
        case EncoderVariant::ResnetS: return "resnet-s";
        default: return "drn-s";
    }
}

std::string to_string(AttentionKind a) {
    switch (a) {
        case AttentionKind::None: return "none";
        case AttentionKind::Channel: return "channel";
        default: return "channel_spatial";
    }
}

void EncoderConfig::validate() const {
    if (stage_channels.size() != 4)
        throw std::invalid_argument("EncoderConfig: need 4 stage channel widths");
    for (int c : stage_channels)
        if (c < 1) throw std::invalid_argument("EncoderConfig: channel widths must be >= 1");
    if (decoder_channels < 1)
        throw std::invalid_argument("EncoderConfig: decoder_channels must be >= 1");
}

void TrainConfig::validate() const {
    if (batch_size < 1 || iterations < 0 || val_interval < 1)
        throw std::invalid_argument("TrainConfig: counts must be positive");
    encoder.validate();
}

// --- ParamStore ---

int ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    const int i = static_cast<int>(values_.size());
    index_[name] = i;
    names_.push_back(name);
    grads_.emplace_back(init.shape);
    values_.push_back(std::move(init));
    return i;
}

int ParamStore::index_of(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter named " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& g : grads_) std::fill(g.data.begin(), g.data.end(), 0.0);
}

// --- Adam ---

AdamState::AdamState(const ParamStore& params) {
    for (std::size_t i = 0; i < params.count(); ++i) {
        m_.emplace_back(params.value(static_cast<int>(i)).shape);
        v_.emplace_back(params.value(static_cast<int>(i)).shape);
    }
}

void AdamState::step(ParamStore& params, const AdamConfig& cfg) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count_));
    for (std::size_t p = 0; p < m_.size(); ++p) {
        Tensor& theta = params.value(static_cast<int>(p));
        Tensor& grad = params.grad(static_cast<int>(p));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = grad.data[i] + cfg.weight_decay * theta.data[i];
            m_[p].data[i] = cfg.beta1 * m_[p].data[i] + (1.0 - cfg.beta1) * g;
            v_[p].data[i] = cfg.beta2 * v_[p].data[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m_[p].data[i] / bc1;
            const double vhat = v_[p].data[i] / bc2;
            theta.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// --- CosegNet ---

namespace {

Tensor he_init(const std::vector<int>& shape, int fan_in, SeededRng& rng) {
    Tensor t(shape);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.normal(0.0, stddev);
    return t;
}

}  // namespace

CosegNet::CosegNet(const EncoderConfig& enc, AttentionKind attention, SeededRng& rng)
    : enc_(enc), attention_(attention) {
    enc_.validate();
    const auto& c = enc_.stage_channels;
    auto conv = [&](const std::string& name, int cin, int cout, int k) {
        params_.add(name + ".w", he_init({cout, cin, k, k}, cin * k * k, rng));
        params_.add(name + ".b", Tensor({cout}));
    };

    conv("stem", 1, c[0], 3);
    const int ins[4] = {c[0], c[0], c[1], c[2]};
    for (int s = 0; s < 4; ++s) {
        const std::string p = "s" + std::to_string(s + 1);
        conv(p + ".a", ins[s], c[s], 3);
        conv(p + ".b", c[s], c[s], 3);
        if (enc_.variant != EncoderVariant::VggS && ins[s] != c[s])
            conv(p + ".proj", ins[s], c[s], 1);  // residual projection
    }

    if (attention_ != AttentionKind::None) {
        const int cf = c[3];
        const int hidden = std::max(1, cf / 4);
        params_.add("att.fc1.w", he_init({hidden, cf}, cf, rng));
        params_.add("att.fc1.b", Tensor({hidden}));
        // Gate layers zero-initialized so the initial gate is sigmoid(0)=0.5.
        params_.add("att.fc2.w", Tensor({cf, hidden}));
        params_.add("att.fc2.b", Tensor({cf}));
        if (attention_ == AttentionKind::ChannelSpatial) {
            params_.add("att.spatial.w", Tensor({1, 2, 7, 7}));
            params_.add("att.spatial.b", Tensor({1}));
        }
    }

    const int dc = enc_.decoder_channels;
    conv("dec.in", c[3], dc, 3);
    for (int i = 0; i < 4; ++i) conv("dec.up" + std::to_string(i), dc, dc, 3);
    conv("dec.out", dc, 2, 1);
}

std::vector<int> CosegNet::inject_params(Graph& g) const {
    std::vector<int> nodes(params_.count());
    for (std::size_t i = 0; i < params_.count(); ++i)
        nodes[i] = g.add_input(params_.value(static_cast<int>(i)), true);
    return nodes;
}

Graph::NodeId CosegNet::encode(Graph& g, Graph::NodeId x, const std::vector<int>& pnodes) const {
    const bool drn = enc_.variant == EncoderVariant::DrnS;
    const bool residual = enc_.variant != EncoderVariant::VggS;
    auto P = [&](const std::string& n) { return pnodes[params_.index_of(n)]; };

    auto conv = [&](Graph::NodeId in, const std::string& name, int dilation) {
        ConvGeom geom{.stride = 1, .padding = dilation, .dilation = dilation};
        return op_conv2d(g, in, P(name + ".w"), P(name + ".b"), geom);
    };

    // stem at full resolution, then pool (stride 2)
    Graph::NodeId h = op_max_pool2x2(g, op_relu(g, conv(x, "stem", 1)));

    // Stages 1..4. Pools: after s1 and s2 always; after s3 only for the
    // stride-16 variants. drn-s instead dilates s3 (x2) and s4 (x4).
    for (int s = 0; s < 4; ++s) {
        const std::string p = "s" + std::to_string(s + 1);
        int dilation = 1;
        if (drn && s == 2) dilation = 2;
        if (drn && s == 3) dilation = 4;
        Graph::NodeId y = op_relu(g, conv(h, p + ".a", dilation));
        y = conv(y, p + ".b", dilation);
        if (residual) {
            Graph::NodeId skip = h;
            if (params_.contains(p + ".proj.w"))
                skip = op_conv2d(g, h, P(p + ".proj.w"), P(p + ".proj.b"),
                                 ConvGeom{.stride = 1, .padding = 0, .dilation = 1});
            y = op_add(g, y, skip);
        }
        h = op_relu(g, y);
        const bool pool = (s == 0 || s == 1) || (s == 2 && !drn);
        if (pool) h = op_max_pool2x2(g, h);
    }
    return h;
}

Graph::NodeId CosegNet::decode(Graph& g, Graph::NodeId feat, int out_h, int out_w,
                               const std::vector<int>& pnodes) const {
    auto P = [&](const std::string& n) { return pnodes[params_.index_of(n)]; };
    const ConvGeom c3{.stride = 1, .padding = 1, .dilation = 1};
    const ConvGeom c1{.stride = 1, .padding = 0, .dilation = 1};

    Graph::NodeId h = op_relu(g, op_conv2d(g, feat, P("dec.in.w"), P("dec.in.b"), c3));
    int cur_h = g.value(h).dim(2), cur_w = g.value(h).dim(3);
    int level = 0;
    while (cur_h < out_h || cur_w < out_w) {
        cur_h = std::min(cur_h * 2, out_h);
        cur_w = std::min(cur_w * 2, out_w);
        h = op_upsample_bilinear(g, h, cur_h, cur_w);
        const std::string name = "dec.up" + std::to_string(level++);
        h = op_relu(g, op_conv2d(g, h, P(name + ".w"), P(name + ".b"), c3));
        if (level > 4) throw std::runtime_error("decode: too many upsampling levels");
    }
    return op_conv2d(g, h, P("dec.out.w"), P("dec.out.b"), c1);
}

CosegNet::SiameseOut CosegNet::forward_siamese(Graph& g, const Tensor& img_a,
                                               const Tensor& img_b) const {
    if (!img_a.same_shape(img_b))
        throw std::invalid_argument("forward_siamese: input pair shapes differ");
    const int H = img_a.dim(2), W = img_a.dim(3);
    SiameseOut out;
    out.param_nodes = inject_params(g);
    auto P = [&](const std::string& n) { return out.param_nodes[params_.index_of(n)]; };

    const Graph::NodeId xa = g.add_input(img_a, false);
    const Graph::NodeId xb = g.add_input(img_b, false);
    Graph::NodeId fa = encode(g, xa, out.param_nodes);
    Graph::NodeId fb = encode(g, xb, out.param_nodes);

    if (attention_ != AttentionKind::None) {
        // Channel gate shared by both branches: squeeze each branch, join
        // by elementwise product, bottleneck MLP, sigmoid.
        Graph::NodeId za = op_global_avg_pool(g, fa);
        Graph::NodeId zb = op_global_avg_pool(g, fb);
        Graph::NodeId j = op_mul(g, za, zb);
        Graph::NodeId hmid = op_relu(g, op_fully_connected(g, j, P("att.fc1.w"), P("att.fc1.b")));
        Graph::NodeId gate =
            op_sigmoid(g, op_fully_connected(g, hmid, P("att.fc2.w"), P("att.fc2.b")));
        fa = op_mul(g, fa, gate);
        fb = op_mul(g, fb, gate);

        if (attention_ == AttentionKind::ChannelSpatial) {
            const ConvGeom c7{.stride = 1, .padding = 3, .dilation = 1};
            auto spatial = [&](Graph::NodeId f) {
                Graph::NodeId mm =
                    op_concat_channels(g, op_channel_mean(g, f), op_channel_max(g, f));
                Graph::NodeId s = op_sigmoid(
                    g, op_conv2d(g, mm, P("att.spatial.w"), P("att.spatial.b"), c7));
                return op_mul(g, f, s);
            };
            fa = spatial(fa);
            fb = spatial(fb);
        }
    }

    out.logits_a = decode(g, fa, H, W, out.param_nodes);
    out.logits_b = decode(g, fb, H, W, out.param_nodes);
    return out;
}

CosegNet::SingleOut CosegNet::forward_single(Graph& g, const Tensor& img) const {
    SingleOut out;
    out.param_nodes = inject_params(g);
    const Graph::NodeId x = g.add_input(img, false);
    const Graph::NodeId f = encode(g, x, out.param_nodes);
    out.logits = decode(g, f, img.dim(2), img.dim(3), out.param_nodes);
    return out;
}

void CosegNet::collect_grads(Graph& g, const std::vector<int>& param_nodes) {
    for (std::size_t i = 0; i < param_nodes.size(); ++i) {
        const Tensor& src = g.grad(param_nodes[i]);
        Tensor& dst = params_.grad(static_cast<int>(i));
        for (std::size_t j = 0; j < dst.size(); ++j) dst.data[j] += src.data[j];
    }
}

namespace {

Tensor fg_prob(const Tensor& logits) {
    const Tensor probs = softmax_channels(logits);
    const int N = probs.dim(0), H = probs.dim(2), W = probs.dim(3);
    Tensor fg({N, 1, H, W});
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) fg.at4(n, 0, y, x) = probs.at4(n, 1, y, x);
    return fg;
}

}  // namespace

std::pair<Tensor, Tensor> CosegNet::infer_pair(const Tensor& img_a, const Tensor& img_b) const {
    Graph g;
    const SiameseOut out = forward_siamese(g, img_a, img_b);
    return {fg_prob(g.value(out.logits_a)), fg_prob(g.value(out.logits_b))};
}

Tensor CosegNet::infer_single(const Tensor& img) const {
    Graph g;
    const SingleOut out = forward_single(g, img);
    return fg_prob(g.value(out.logits));
}

// --- checkpoint I/O ---

namespace {

constexpr char kMagic[4] = {'C', 'S', 'G', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_raw(out, kVersion);
    write_raw(out, static_cast<std::uint64_t>(params.count()));
    for (std::size_t i = 0; i < params.count(); ++i) {
        const std::string& name = params.name(static_cast<int>(i));
        const Tensor& t = params.value(static_cast<int>(i));
        write_raw(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw(out, static_cast<std::uint32_t>(t.rank()));
        for (int e : t.shape) write_raw(out, static_cast<std::uint32_t>(e));
        for (double v : t.data) write_raw(out, static_cast<float>(v));
    }
}

void load_checkpoint(const std::string& path, ParamStore& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    if (read_raw<std::uint32_t>(in) != kVersion)
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    const auto count = read_raw<std::uint64_t>(in);
    if (count != params.count())
        throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_raw<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const int idx = params.index_of(name);
        Tensor& t = params.value(idx);
        const auto rank = read_raw<std::uint32_t>(in);
        std::vector<int> shape(rank);
        for (auto& e : shape) e = static_cast<int>(read_raw<std::uint32_t>(in));
        if (shape != t.shape)
            throw std::runtime_error("checkpoint: shape mismatch for parameter " + name);
        for (double& v : t.data) v = static_cast<double>(read_raw<float>(in));
    }
}

// --- training ---

namespace {

Tensor stack_batch(const std::vector<const TrainSample*>& samples) {
    const int H = samples[0]->image.dim(2), W = samples[0]->image.dim(3);
    Tensor batch({static_cast<int>(samples.size()), 1, H, W});
    std::size_t off = 0;
    for (const TrainSample* s : samples) {
        std::copy(s->image.data.begin(), s->image.data.end(), batch.data.begin() + off);
        off += s->image.size();
    }
    return batch;
}

double dice_of_prob(const Tensor& fg, const BinaryMask& gt) {
    long tp = 0, fp = 0, fn = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            const bool p = fg.at4(0, 0, y, x) >= 0.5;
            const bool t = gt.at(x, y) != 0;
            tp += p && t;
            fp += p && !t;
            fn += !p && t;
        }
    if (2 * tp + fp + fn == 0) return 1.0;
    return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

const TrainSample& sample_of(const SampleMap& samples, const std::string& id) {
    const auto it = samples.find(id);
    if (it == samples.end()) throw std::runtime_error("train: no sample for lesion " + id);
    return it->second;
}

// Keeps a snapshot of the best-validation parameters.
struct BestTracker {
    double best = -1.0;
    std::vector<Tensor> snapshot;

    void consider(double val, const ParamStore& params) {
        if (val <= best) return;
        best = val;
        snapshot.clear();
        for (std::size_t i = 0; i < params.count(); ++i)
            snapshot.push_back(params.value(static_cast<int>(i)));
    }
    void restore(ParamStore& params) const {
        if (snapshot.empty()) return;
        for (std::size_t i = 0; i < snapshot.size(); ++i)
            params.value(static_cast<int>(i)) = snapshot[i];
    }
};

}  // namespace

TrainResult train_pairs(CosegNet& net, const PairSet& train_pairs, const PairSet& val_pairs,
                        const SampleMap& samples, const TrainConfig& cfg) {
    cfg.validate();
    if (train_pairs.pairs.empty()) throw std::runtime_error("train: empty pair set");
    SeededRng rng(cfg.seed);
    AdamState adam(net.params());
    TrainResult result;
    BestTracker best;

    // Fixed validation subset (at most 8 pairs) for checkpoint selection.
    std::vector<LesionPair> val_subset = val_pairs.pairs;
    if (val_subset.size() > 8) {
        rng.shuffle(val_subset);
        val_subset.resize(8);
    }
    auto val_dice = [&]() {
        if (val_subset.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& p : val_subset) {
            const TrainSample& sa = sample_of(samples, p.a);
            const TrainSample& sb = sample_of(samples, p.b);
            const auto [fa, fb] = net.infer_pair(sa.image, sb.image);
            acc += 0.5 * (dice_of_prob(fa, sa.mask) + dice_of_prob(fb, sb.mask));
        }
        return acc / static_cast<double>(val_subset.size());
    };

    std::vector<LesionPair> order = train_pairs.pairs;
    rng.shuffle(order);
    std::size_t cursor = 0;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        std::vector<const TrainSample*> batch_a, batch_b;
        std::vector<BinaryMask> masks_a, masks_b;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            const LesionPair& p = order[cursor++];
            const TrainSample& sa = sample_of(samples, p.a);
            const TrainSample& sb = sample_of(samples, p.b);
            batch_a.push_back(&sa);
            batch_b.push_back(&sb);
            masks_a.push_back(sa.mask);
            masks_b.push_back(sb.mask);
        }

        Graph g;
        const auto out = net.forward_siamese(g, stack_batch(batch_a), stack_batch(batch_b));
        const auto loss_a = op_softmax_cross_entropy(g, out.logits_a, masks_a);
        const auto loss_b = op_softmax_cross_entropy(g, out.logits_b, masks_b);
        const auto loss = op_mean2(g, loss_a, loss_b);
        net.params().zero_grads();
        g.backward(loss);
        net.collect_grads(g, out.param_nodes);
        adam.step(net.params(), cfg.adam);

        LossCurvePoint point{iter, g.value(loss).data[0],
                             std::numeric_limits<double>::quiet_NaN()};
        if ((iter + 1) % cfg.val_interval == 0 || iter + 1 == cfg.iterations) {
            point.val_dice = val_dice();
            best.consider(point.val_dice, net.params());
        }
        result.curve.push_back(point);
    }
    if (cfg.iterations > 0) {
        best.restore(net.params());
        result.best_val_dice = best.best;
    }
    return result;
}

TrainResult train_single(CosegNet& net, const std::vector<std::string>& train_ids,
                         const std::vector<std::string>& val_ids, const SampleMap& samples,
                         const TrainConfig& cfg) {
    cfg.validate();
    if (train_ids.empty()) throw std::runtime_error("train: empty training set");
    SeededRng rng(cfg.seed);
    AdamState adam(net.params());
    TrainResult result;
    BestTracker best;

    std::vector<std::string> val_subset = val_ids;
    if (val_subset.size() > 16) {
        rng.shuffle(val_subset);
        val_subset.resize(16);
    }
    auto val_dice = [&]() {
        if (val_subset.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& id : val_subset) {
            const TrainSample& s = sample_of(samples, id);
            acc += dice_of_prob(net.infer_single(s.image), s.mask);
        }
        return acc / static_cast<double>(val_subset.size());
    };

    std::vector<std::string> order = train_ids;
    rng.shuffle(order);
    std::size_t cursor = 0;

    // Matches the pair trainer's per-iteration image budget.
    const int images_per_iter = cfg.batch_size * 2;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        std::vector<const TrainSample*> batch;
        std::vector<BinaryMask> masks;
        for (int b = 0; b < images_per_iter; ++b) {
            if (cursor >= order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            const TrainSample& s = sample_of(samples, order[cursor++]);
            batch.push_back(&s);
            masks.push_back(s.mask);
        }
        Graph g;
        const auto out = net.forward_single(g, stack_batch(batch));
        const auto loss = op_softmax_cross_entropy(g, out.logits, masks);
        net.params().zero_grads();
        g.backward(loss);
        net.collect_grads(g, out.param_nodes);
        adam.step(net.params(), cfg.adam);

        LossCurvePoint point{iter, g.value(loss).data[0],
                             std::numeric_limits<double>::quiet_NaN()};
        if ((iter + 1) % cfg.val_interval == 0 || iter + 1 == cfg.iterations) {
            point.val_dice = val_dice();
            best.consider(point.val_dice, net.params());
        }
        result.curve.push_back(point);
    }
    if (cfg.iterations > 0) {
        best.restore(net.params());
        result.best_val_dice = best.best;
    }
    return result;
}

void write_loss_curve_csv(const std::string& path, const std::vector<LossCurvePoint>& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write loss curve: " + path);
    out.precision(17);
    out << "iteration,train_loss,val_dice\n";
    for (const auto& p : curve) {
        out << p.iteration << ',' << p.train_loss << ',';
        if (std::isnan(p.val_dice))
            out << "";
        else
            out << p.val_dice;
        out << '\n';
    }
}

}  // namespace coseg
