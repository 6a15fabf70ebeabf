#include "coseg/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

#include "coseg/grabcut.hpp"
#include "coseg/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace coseg {

void PipelineConfig::validate() const {
    if (output_dir.empty()) throw std::invalid_argument("config: output_dir is required");
    if (preprocess.target_size < 8)
        throw std::invalid_argument("config: preprocess.target_size must be >= 8");
    if (preprocess.normalization != "minmax")
        throw std::invalid_argument("config: only minmax normalization is implemented");
    if (pairing != "cluster" && pairing != "random")
        throw std::invalid_argument("config: pairing must be 'cluster' or 'random'");
    grabcut.validate();
    train.validate();
    crf.params.validate();
    phantom.validate();
}

namespace {

ordered_json to_json(const PipelineConfig& c) {
    ordered_json j;
    j["version"] = 1;
    j["paths"] = {{"images", c.images_dir},
                  {"annotations", c.annotations_csv},
                  {"output", c.output_dir}};
    j["preprocess"] = {{"target_size", c.preprocess.target_size},
                       {"normalization", c.preprocess.normalization}};
    j["grabcut"] = {{"gmm_components", c.grabcut.gmm_components},
                    {"iterations", c.grabcut.grabcut_iterations},
                    {"gamma", c.grabcut.smoothness_gamma},
                    {"fg_seed_shrink", c.grabcut.fg_seed_shrink},
                    {"bbox_expand", c.grabcut.bbox_expand},
                    {"neighbor_system", c.grabcut.neighbor_system},
                    {"gmm_em_iterations", c.grabcut.gmm_em_iterations}};
    j["clustering"] = {{"k", c.clustering.k},
                       {"feature_mode", c.clustering.feature_mode},
                       {"features_csv", c.clustering.features_csv},
                       {"cap_per_cluster", c.clustering.cap_per_cluster},
                       {"kmeans_iterations", c.clustering.kmeans_iterations}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"iterations", c.train.iterations},
                  {"val_interval", c.train.val_interval},
                  {"lr", c.train.adam.lr},
                  {"weight_decay", c.train.adam.weight_decay},
                  {"attention", to_string(c.train.attention)},
                  {"encoder", to_string(c.train.encoder.variant)},
                  {"stage_channels", c.train.encoder.stage_channels},
                  {"decoder_channels", c.train.encoder.decoder_channels},
                  {"single_branch", c.train.single_branch_baseline}};
    j["crf"] = {{"w_app", c.crf.params.w_app},
                {"w_smooth", c.crf.params.w_smooth},
                {"theta_alpha", c.crf.params.theta_alpha},
                {"theta_beta", c.crf.params.theta_beta},
                {"theta_gamma", c.crf.params.theta_gamma},
                {"iterations", c.crf.params.iterations},
                {"downsample_factor", c.crf.downsample_factor}};
    j["phantom"] = {{"count", c.phantom.lesion_count}, {"size", c.phantom.image_size}};
    j["pairing"] = c.pairing;
    j["seed"] = c.seed;
    return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j = json::parse(in);
    PipelineConfig c;
    if (j.contains("paths")) {
        maybe(j["paths"], "images", c.images_dir);
        maybe(j["paths"], "annotations", c.annotations_csv);
        maybe(j["paths"], "output", c.output_dir);
    }
    if (j.contains("preprocess")) {
        maybe(j["preprocess"], "target_size", c.preprocess.target_size);
        maybe(j["preprocess"], "normalization", c.preprocess.normalization);
    }
    if (j.contains("grabcut")) {
        auto& g = j["grabcut"];
        maybe(g, "gmm_components", c.grabcut.gmm_components);
        maybe(g, "iterations", c.grabcut.grabcut_iterations);
        maybe(g, "gamma", c.grabcut.smoothness_gamma);
        maybe(g, "fg_seed_shrink", c.grabcut.fg_seed_shrink);
        maybe(g, "bbox_expand", c.grabcut.bbox_expand);
        maybe(g, "neighbor_system", c.grabcut.neighbor_system);
        maybe(g, "gmm_em_iterations", c.grabcut.gmm_em_iterations);
    }
    if (j.contains("clustering")) {
        auto& g = j["clustering"];
        maybe(g, "k", c.clustering.k);
        maybe(g, "feature_mode", c.clustering.feature_mode);
        maybe(g, "features_csv", c.clustering.features_csv);
        maybe(g, "cap_per_cluster", c.clustering.cap_per_cluster);
        maybe(g, "kmeans_iterations", c.clustering.kmeans_iterations);
    }
    if (j.contains("train")) {
        auto& g = j["train"];
        maybe(g, "batch_size", c.train.batch_size);
        maybe(g, "iterations", c.train.iterations);
        maybe(g, "val_interval", c.train.val_interval);
        maybe(g, "lr", c.train.adam.lr);
        maybe(g, "weight_decay", c.train.adam.weight_decay);
        if (g.contains("attention"))
            c.train.attention = attention_kind_from_string(g["attention"].get<std::string>());
        if (g.contains("encoder"))
            c.train.encoder.variant = encoder_variant_from_string(g["encoder"].get<std::string>());
        maybe(g, "stage_channels", c.train.encoder.stage_channels);
        maybe(g, "decoder_channels", c.train.encoder.decoder_channels);
        maybe(g, "single_branch", c.train.single_branch_baseline);
    }
    if (j.contains("crf")) {
        auto& g = j["crf"];
        maybe(g, "w_app", c.crf.params.w_app);
        maybe(g, "w_smooth", c.crf.params.w_smooth);
        maybe(g, "theta_alpha", c.crf.params.theta_alpha);
        maybe(g, "theta_beta", c.crf.params.theta_beta);
        maybe(g, "theta_gamma", c.crf.params.theta_gamma);
        maybe(g, "iterations", c.crf.params.iterations);
        maybe(g, "downsample_factor", c.crf.downsample_factor);
    }
    if (j.contains("phantom")) {
        maybe(j["phantom"], "count", c.phantom.lesion_count);
        maybe(j["phantom"], "size", c.phantom.image_size);
    }
    maybe(j, "pairing", c.pairing);
    maybe(j, "seed", c.seed);
    if (c.phantom.archetypes.empty()) c.phantom.archetypes = default_phantom_spec().archetypes;
    c.phantom.seed = c.seed;
    c.train.seed = c.seed ^ 0x747261696eULL;
    c.validate();
    return c;
}

void save_config(const std::string& path, const PipelineConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path);
    out << to_json(cfg).dump(2) << '\n';
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t config_hash(const PipelineConfig& cfg) {
    const std::string s = to_json(cfg).dump();
    return fnv1a(s.data(), s.size());
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("hash_file: cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return h;
}

// --- manifests ---

namespace {

fs::path manifest_path(const PipelineConfig& cfg, const std::string& stage) {
    return fs::path(cfg.output_dir) / ("manifest_" + stage + ".json");
}

void write_manifest(const PipelineConfig& cfg, const std::string& stage,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    ordered_json j;
    j["stage"] = stage;
    j["config_hash"] = config_hash(cfg);
    ordered_json in = ordered_json::object();
    for (const auto& p : inputs) in[p] = hash_file(p);
    j["inputs"] = in;
    j["outputs"] = outputs;
    std::ofstream out(manifest_path(cfg, stage));
    if (!out) throw std::runtime_error("cannot write manifest for stage " + stage);
    out << j.dump(2) << '\n';
}

void require_manifest(const PipelineConfig& cfg, const std::string& stage,
                      const StageOptions& opt) {
    const fs::path p = manifest_path(cfg, stage);
    if (!fs::exists(p))
        throw std::runtime_error("missing upstream artifact: stage '" + stage +
                                 "' has not produced " + p.string() + "; run `coseg " + stage +
                                 "` first");
    std::ifstream in(p);
    json j = json::parse(in);
    if (j.value("config_hash", std::uint64_t{0}) != config_hash(cfg)) {
        if (!opt.force)
            throw std::runtime_error("manifest config hash mismatch for stage '" + stage +
                                     "' (config changed since it ran); re-run it or pass --force");
        std::cerr << "warning: config hash mismatch for upstream stage '" << stage
                  << "', continuing because of --force\n";
    }
}

// Resolved data locations: explicit user paths, or phantom stage outputs.
fs::path images_dir(const PipelineConfig& cfg) {
    return cfg.images_dir.empty() ? fs::path(cfg.output_dir) / "images"
                                  : fs::path(cfg.images_dir);
}
fs::path annotations_csv(const PipelineConfig& cfg) {
    return cfg.annotations_csv.empty() ? fs::path(cfg.output_dir) / "annotations.csv"
                                       : fs::path(cfg.annotations_csv);
}

std::vector<RecistRecord> load_annotations(const PipelineConfig& cfg) {
    const fs::path p = annotations_csv(cfg);
    if (!fs::exists(p))
        throw std::runtime_error("missing annotations CSV " + p.string() +
                                 " (run `coseg phantom` or point paths.annotations at data)");
    return read_recist_csv(p.string());
}

ImageGrid load_image(const PipelineConfig& cfg, const std::string& lesion_id) {
    const fs::path p = images_dir(cfg) / (lesion_id + ".png");
    if (!fs::exists(p)) throw std::runtime_error("missing image " + p.string());
    return read_image_png(p.string());
}

}  // namespace

// --- preprocessing helpers ---

PreprocessedCase preprocess_case(const ImageGrid& img, const BinaryMask& mask, int target_size) {
    PreprocessedCase prep;
    prep.orig_w = img.width;
    prep.orig_h = img.height;
    const double fill = *std::min_element(img.data.begin(), img.data.end());
    const ImageGrid square = pad_to_square(img, fill);
    prep.pad_x0 = (square.width - img.width) / 2;
    prep.pad_y0 = (square.height - img.height) / 2;
    const ImageGrid resized = normalize(resize_bilinear(square, target_size, target_size));
    prep.image = Tensor({1, 1, target_size, target_size});
    prep.image.data = resized.data;

    BinaryMask msquare(square.width, square.height);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            msquare.at(prep.pad_x0 + x, prep.pad_y0 + y) = mask.at(x, y);
    prep.mask = resize_mask_nearest(msquare, target_size, target_size);
    return prep;
}

ImageGrid prob_to_original(const ImageGrid& prob, const PreprocessedCase& prep) {
    const int square = std::max(prep.orig_w, prep.orig_h);
    const ImageGrid up = resize_bilinear(prob, square, square);
    ImageGrid out(prep.orig_w, prep.orig_h);
    for (int y = 0; y < prep.orig_h; ++y)
        for (int x = 0; x < prep.orig_w; ++x)
            out.at(x, y) = up.at(prep.pad_x0 + x, prep.pad_y0 + y);
    return out;
}

BinaryMask mask_contour(const BinaryMask& mask) {
    BinaryMask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            bool edge = false;
            for (int dy = -1; dy <= 1 && !edge; ++dy)
                for (int dx = -1; dx <= 1 && !edge; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || nx >= mask.width || ny < 0 || ny >= mask.height ||
                        !mask.at(nx, ny))
                        edge = true;
                }
            if (edge) out.at(x, y) = 1;
        }
    return out;
}

void write_overlay_png(const std::string& path, const ImageGrid& img, const BinaryMask& pred,
                       const BinaryMask& gt) {
    const int w = img.width, h = img.height;
    const BinaryMask pc = mask_contour(pred);
    const BinaryMask gc = mask_contour(gt);
    // Two panels: prediction contour (red) | ground truth contour (green).
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(2 * w) * h * 3);
    auto put = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        const std::size_t i = (static_cast<std::size_t>(y) * 2 * w + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto v = static_cast<std::uint8_t>(
                std::lround(std::clamp(img.at(x, y), 0.0, 1.0) * 255.0));
            if (pc.at(x, y))
                put(x, y, 255, 0, 0);
            else
                put(x, y, v, v, v);
            if (gc.at(x, y))
                put(w + x, y, 0, 255, 0);
            else
                put(w + x, y, v, v, v);
        }
    write_rgb_png(path, 2 * w, h, rgb);
}

// --- stages ---

void cmd_phantom(const PipelineConfig& cfg, const StageOptions&) {
    cfg.validate();
    fs::create_directories(fs::path(cfg.output_dir) / "images");
    fs::create_directories(fs::path(cfg.output_dir) / "gt");
    const std::vector<PhantomCase> cases = phantom_generate(cfg.phantom);

    std::vector<RecistRecord> records;
    std::ofstream arch(fs::path(cfg.output_dir) / "archetypes.csv");
    arch << "lesion_id,archetype\n";
    std::vector<std::string> outputs;
    for (const auto& c : cases) {
        const std::string img_path =
            (fs::path(cfg.output_dir) / "images" / (c.lesion_id + ".png")).string();
        const std::string gt_path =
            (fs::path(cfg.output_dir) / "gt" / (c.lesion_id + ".png")).string();
        write_image_png(img_path, c.image);
        write_mask_png(gt_path, c.gt_mask);
        records.push_back({img_path, c.lesion_id, c.annotation});
        arch << c.lesion_id << ',' << c.archetype << '\n';
        outputs.push_back(img_path);
        outputs.push_back(gt_path);
    }
    write_recist_csv(annotations_csv(cfg).string(), records);
    write_manifest(cfg, "phantom", {}, outputs);
}

void cmd_gen_masks(const PipelineConfig& cfg, const StageOptions&) {
    cfg.validate();
    const auto records = load_annotations(cfg);
    fs::create_directories(fs::path(cfg.output_dir) / "masks_init");
    std::vector<std::string> outputs;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const ImageGrid raw = load_image(cfg, r.lesion_id);
        const ImageGrid img = normalize(raw);
        const Trimap tm = trimap_from_recist(r.annotation, img.width, img.height, cfg.grabcut);
        SeededRng rng = SeededRng(cfg.seed).fork(0x6d61736bULL + i);
        const BinaryMask mask = grabcut(img, tm, cfg.grabcut, rng);
        const std::string out_path =
            (fs::path(cfg.output_dir) / "masks_init" / (r.lesion_id + ".png")).string();
        write_mask_png(out_path, mask);
        outputs.push_back(out_path);
    }
    write_manifest(cfg, "gen-masks", {annotations_csv(cfg).string()}, outputs);
}

void cmd_cluster(const PipelineConfig& cfg, const StageOptions&) {
    cfg.validate();
    const auto records = load_annotations(cfg);
    std::vector<LesionFeature> features;
    if (cfg.clustering.feature_mode == "csv") {
        if (cfg.clustering.features_csv.empty())
            throw std::runtime_error("clustering.feature_mode=csv requires features_csv");
        features = read_features_csv(cfg.clustering.features_csv);
    } else {
        for (const auto& r : records) {
            // Raw intensities: per-image normalization would erase the
            // absolute-brightness differences between lesion types.
            const ImageGrid img = load_image(cfg, r.lesion_id);
            features.push_back(extract_feature(img, r.annotation));
        }
    }
    const std::string feat_path = (fs::path(cfg.output_dir) / "features.csv").string();
    write_features_csv(feat_path, features);

    // Standardize columns so the pixel-scale diameter features cannot swamp
    // the unit-scale histogram mass in the Euclidean distance.
    std::vector<LesionFeature> scaled = features;
    if (!scaled.empty()) {
        const std::size_t dim = scaled[0].vector.size();
        for (std::size_t d = 0; d < dim; ++d) {
            double sum = 0.0, sum2 = 0.0;
            for (const auto& f : scaled) {
                sum += f.vector[d];
                sum2 += f.vector[d] * f.vector[d];
            }
            const double mean = sum / scaled.size();
            const double sd = std::sqrt(std::max(0.0, sum2 / scaled.size() - mean * mean));
            for (auto& f : scaled) f.vector[d] = sd > 1e-12 ? (f.vector[d] - mean) / sd : 0.0;
        }
    }
    // Several k-means++ restarts; keep the lowest-inertia solution.
    SeededRng rng = SeededRng(cfg.seed).fork(0x636c7573ULL);
    ClusterModel model;
    double best_inertia = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 10; ++restart) {
        SeededRng run = rng.fork(restart);
        KmeansTrace trace;
        ClusterModel cand = kmeans(scaled, cfg.clustering.k, cfg.clustering.kmeans_iterations,
                                   run, &trace);
        const double inertia = trace.inertia_per_iteration.empty()
                                   ? std::numeric_limits<double>::infinity()
                                   : trace.inertia_per_iteration.back();
        if (inertia < best_inertia) {
            best_inertia = inertia;
            model = std::move(cand);
        }
    }
    const std::string cluster_path = (fs::path(cfg.output_dir) / "clusters.csv").string();
    write_cluster_csv(cluster_path, model);
    write_manifest(cfg, "cluster", {annotations_csv(cfg).string()}, {feat_path, cluster_path});
}

void cmd_split(const PipelineConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    require_manifest(cfg, "cluster", opt);
    const ClusterModel model =
        read_cluster_csv((fs::path(cfg.output_dir) / "clusters.csv").string());
    SeededRng rng = SeededRng(cfg.seed).fork(0x73706c69ULL);
    const DatasetSplit split = stratified_split(model, {0.8, 0.1, 0.1}, rng);
    const std::string split_path = (fs::path(cfg.output_dir) / "split.csv").string();
    write_split_csv(split_path, split);
    write_manifest(cfg, "split", {(fs::path(cfg.output_dir) / "clusters.csv").string()},
                   {split_path});
}

void cmd_pair(const PipelineConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    require_manifest(cfg, "split", opt);
    const ClusterModel model =
        read_cluster_csv((fs::path(cfg.output_dir) / "clusters.csv").string());
    const DatasetSplit split = read_split_csv((fs::path(cfg.output_dir) / "split.csv").string());
    SeededRng rng = SeededRng(cfg.seed).fork(0x70616972ULL);

    auto emit = [&](const std::vector<std::string>& members, const std::string& tag,
                    bool force_cluster) {
        PairSet ps;
        if (cfg.pairing == "random" && !force_cluster) {
            // Ablation control: same pair budget, partners across clusters.
            const PairSet ref = make_pairs(members, tag, model, cfg.clustering.cap_per_cluster, rng);
            ps = make_random_pairs(members, tag, ref.pairs.size(), rng);
        } else {
            ps = make_pairs(members, tag, model, cfg.clustering.cap_per_cluster, rng);
        }
        const std::string path = (fs::path(cfg.output_dir) / ("pairs_" + tag + ".csv")).string();
        write_pairs_csv(path, ps);
        return path;
    };
    // Test pairs stay within-cluster in both modes so evaluation is
    // comparable across pairing strategies.
    const std::string p1 = emit(split.train, "train", false);
    const std::string p2 = emit(split.val, "val", false);
    const std::string p3 = emit(split.test, "test", true);
    write_manifest(cfg, "pair", {(fs::path(cfg.output_dir) / "split.csv").string()}, {p1, p2, p3});
}

namespace {

SampleMap load_samples(const PipelineConfig& cfg, const std::vector<std::string>& ids,
                       std::map<std::string, PreprocessedCase>* preps = nullptr) {
    SampleMap samples;
    for (const auto& id : ids) {
        const ImageGrid img = load_image(cfg, id);
        const fs::path mask_path = fs::path(cfg.output_dir) / "masks_init" / (id + ".png");
        if (!fs::exists(mask_path))
            throw std::runtime_error("missing initial mask " + mask_path.string() +
                                     "; run `coseg gen-masks` first");
        const BinaryMask mask = read_mask_png(mask_path.string());
        PreprocessedCase prep = preprocess_case(img, mask, cfg.preprocess.target_size);
        samples[id] = TrainSample{prep.image, prep.mask};
        if (preps) (*preps)[id] = std::move(prep);
    }
    return samples;
}

CosegNet make_net(const PipelineConfig& cfg) {
    SeededRng init_rng = SeededRng(cfg.seed).fork(0x696e6974ULL);
    const AttentionKind att =
        cfg.train.single_branch_baseline ? AttentionKind::None : cfg.train.attention;
    return CosegNet(cfg.train.encoder, att, init_rng);
}

}  // namespace

void cmd_train(const PipelineConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    require_manifest(cfg, "pair", opt);
    const DatasetSplit split = read_split_csv((fs::path(cfg.output_dir) / "split.csv").string());

    std::vector<std::string> ids = split.train;
    ids.insert(ids.end(), split.val.begin(), split.val.end());
    const SampleMap samples = load_samples(cfg, ids);

    CosegNet net = make_net(cfg);
    TrainResult result;
    if (cfg.train.single_branch_baseline) {
        result = train_single(net, split.train, split.val, samples, cfg.train);
    } else {
        const PairSet tp = read_pairs_csv((fs::path(cfg.output_dir) / "pairs_train.csv").string());
        const PairSet vp = read_pairs_csv((fs::path(cfg.output_dir) / "pairs_val.csv").string());
        result = train_pairs(net, tp, vp, samples, cfg.train);
    }
    const std::string ckpt = (fs::path(cfg.output_dir) / "checkpoint.bin").string();
    const std::string curve = (fs::path(cfg.output_dir) / "loss_curve.csv").string();
    save_checkpoint(ckpt, net.params());
    write_loss_curve_csv(curve, result.curve);
    write_manifest(cfg, "train",
                   {(fs::path(cfg.output_dir) / "pairs_train.csv").string(),
                    (fs::path(cfg.output_dir) / "split.csv").string()},
                   {ckpt, curve});
}

void cmd_infer(const PipelineConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    require_manifest(cfg, "train", opt);
    const DatasetSplit split = read_split_csv((fs::path(cfg.output_dir) / "split.csv").string());

    std::map<std::string, PreprocessedCase> preps;
    const SampleMap samples = load_samples(cfg, split.test, &preps);

    CosegNet net = make_net(cfg);
    load_checkpoint((fs::path(cfg.output_dir) / "checkpoint.bin").string(), net.params());

    fs::create_directories(fs::path(cfg.output_dir) / "prob");
    fs::create_directories(fs::path(cfg.output_dir) / "pred");

    std::map<std::string, ImageGrid> probs;  // first prediction per lesion
    const int T = cfg.preprocess.target_size;
    auto record = [&](const std::string& id, const Tensor& fg) {
        if (probs.count(id)) return;
        ImageGrid p(T, T);
        p.data.assign(fg.data.begin(), fg.data.end());
        probs.emplace(id, prob_to_original(p, preps.at(id)));
    };

    if (cfg.train.single_branch_baseline) {
        for (const auto& id : split.test) record(id, net.infer_single(samples.at(id).image));
    } else {
        const PairSet test_pairs =
            read_pairs_csv((fs::path(cfg.output_dir) / "pairs_test.csv").string());
        for (const auto& p : test_pairs.pairs) {
            if (probs.count(p.a) && probs.count(p.b)) continue;
            const auto [fa, fb] = net.infer_pair(samples.at(p.a).image, samples.at(p.b).image);
            record(p.a, fa);
            record(p.b, fb);
        }
        // Singleton lesions with no within-cluster partner: pair with self.
        for (const auto& id : split.test)
            if (!probs.count(id)) {
                const auto [fa, fb] = net.infer_pair(samples.at(id).image, samples.at(id).image);
                record(id, fa);
            }
    }

    std::vector<std::string> outputs;
    for (const auto& [id, prob] : probs) {
        const std::string prob_path = (fs::path(cfg.output_dir) / "prob" / (id + ".png")).string();
        const std::string pred_path = (fs::path(cfg.output_dir) / "pred" / (id + ".png")).string();
        write_image_png(prob_path, prob);
        BinaryMask mask(prob.width, prob.height);
        for (std::size_t i = 0; i < prob.size(); ++i) mask.labels[i] = prob.data[i] >= 0.5 ? 1 : 0;
        write_mask_png(pred_path, mask);
        outputs.push_back(prob_path);
        outputs.push_back(pred_path);
    }
    write_manifest(cfg, "infer", {(fs::path(cfg.output_dir) / "checkpoint.bin").string()},
                   outputs);
}

void cmd_refine(const PipelineConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    require_manifest(cfg, "infer", opt);
    const DatasetSplit split = read_split_csv((fs::path(cfg.output_dir) / "split.csv").string());
    fs::create_directories(fs::path(cfg.output_dir) / "refined");
    std::vector<std::string> outputs;
    for (const auto& id : split.test) {
        const fs::path prob_path = fs::path(cfg.output_dir) / "prob" / (id + ".png");
        if (!fs::exists(prob_path))
            throw std::runtime_error("missing probability map " + prob_path.string() +
                                     "; run `coseg infer` first");
        const ImageGrid prob = read_image_png(prob_path.string());
        const ImageGrid img = normalize(load_image(cfg, id));
        const UnaryField unary = unary_from_prob(prob);
        const CrfResult res =
            meanfield_refine_downsampled(img, unary, cfg.crf.params, cfg.crf.downsample_factor);
        const std::string out_path =
            (fs::path(cfg.output_dir) / "refined" / (id + ".png")).string();
        write_mask_png(out_path, res.mask);
        outputs.push_back(out_path);
    }
    write_manifest(cfg, "refine", {}, outputs);
}

EvalReport cmd_evaluate(const PipelineConfig& cfg, const StageOptions&,
                        const std::string& pred_dir) {
    cfg.validate();
    const fs::path gt_dir = fs::path(cfg.output_dir) / "gt";
    const fs::path pd = fs::path(cfg.output_dir) / pred_dir;
    if (!fs::exists(pd))
        throw std::runtime_error("missing prediction directory " + pd.string() +
                                 "; run the producing stage first");
    if (!fs::exists(gt_dir))
        throw std::runtime_error("missing ground-truth directory " + gt_dir.string());

    std::vector<CaseMetrics> cases;
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(pd))
        if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) {
        const fs::path gt_path = gt_dir / (id + ".png");
        if (!fs::exists(gt_path)) continue;
        const BinaryMask pred = read_mask_png((pd / (id + ".png")).string());
        const BinaryMask gt = read_mask_png(gt_path.string());
        cases.push_back(evaluate_case(id, pred, gt));
    }
    if (cases.empty()) throw std::runtime_error("evaluate: no prediction/GT id overlap");
    const EvalReport report = aggregate(cases);
    const std::string csv = (fs::path(cfg.output_dir) / ("report_" + pred_dir + ".csv")).string();
    const std::string js = (fs::path(cfg.output_dir) / ("report_" + pred_dir + ".json")).string();
    write_report_csv(csv, report);
    write_report_json(js, report);
    write_manifest(cfg, "evaluate-" + pred_dir, {}, {csv, js});
    return report;
}

void cmd_overlay(const PipelineConfig& cfg, const StageOptions&, const std::string& pred_dir) {
    cfg.validate();
    const fs::path pd = fs::path(cfg.output_dir) / pred_dir;
    const fs::path gt_dir = fs::path(cfg.output_dir) / "gt";
    if (!fs::exists(pd)) throw std::runtime_error("missing prediction directory " + pd.string());
    fs::create_directories(fs::path(cfg.output_dir) / "overlays");
    std::vector<std::string> missing;
    std::vector<std::string> outputs;
    for (const auto& e : fs::directory_iterator(pd)) {
        if (e.path().extension() != ".png") continue;
        const std::string id = e.path().stem().string();
        const fs::path gt_path = gt_dir / (id + ".png");
        if (!fs::exists(gt_path)) {
            missing.push_back(id);
            continue;
        }
        const ImageGrid img = normalize(load_image(cfg, id));
        const BinaryMask pred = read_mask_png(e.path().string());
        const BinaryMask gt = read_mask_png(gt_path.string());
        const std::string out_path =
            (fs::path(cfg.output_dir) / "overlays" / (id + ".png")).string();
        write_overlay_png(out_path, img, pred, gt);
        outputs.push_back(out_path);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& id : missing) list += " " + id;
        throw std::runtime_error("overlay: predictions without matching GT ids:" + list);
    }
    write_manifest(cfg, "overlay", {}, outputs);
}

EvalReport run_full_pipeline(const PipelineConfig& cfg, const StageOptions& opt) {
    cmd_phantom(cfg, opt);
    cmd_gen_masks(cfg, opt);
    cmd_cluster(cfg, opt);
    cmd_split(cfg, opt);
    cmd_pair(cfg, opt);
    cmd_train(cfg, opt);
    cmd_infer(cfg, opt);
    cmd_refine(cfg, opt);
    cmd_overlay(cfg, opt, "refined");
    return cmd_evaluate(cfg, opt, "refined");
}

}  // namespace coseg
