#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "coseg/pipeline.hpp"
#include "coseg/png_io.hpp"

using namespace coseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("coseg_pipe_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

PipelineConfig tiny_config(const fs::path& out) {
    PipelineConfig cfg;
    cfg.output_dir = out.string();
    cfg.phantom = default_phantom_spec();
    cfg.phantom.lesion_count = 8;
    cfg.phantom.image_size = 96;
    cfg.preprocess.target_size = 32;
    cfg.clustering.k = 2;
    cfg.train.iterations = 3;
    cfg.train.val_interval = 2;
    cfg.train.batch_size = 1;
    cfg.train.encoder.stage_channels = {2, 2, 3, 3};
    cfg.train.encoder.decoder_channels = 2;
    cfg.seed = 21;
    cfg.phantom.seed = cfg.seed;
    return cfg;
}

}  // namespace

TEST_CASE("config json roundtrips through save/load with a stable hash") {
    TempDir tmp;
    PipelineConfig cfg = tiny_config(tmp.path / "out");
    cfg.pairing = "random";
    cfg.crf.downsample_factor = 3;
    cfg.train.attention = AttentionKind::ChannelSpatial;
    const auto path = (tmp.path / "cfg.json").string();
    save_config(path, cfg);
    const PipelineConfig back = load_config(path);
    CHECK(back.output_dir == cfg.output_dir);
    CHECK(back.pairing == "random");
    CHECK(back.crf.downsample_factor == 3);
    CHECK(back.train.attention == AttentionKind::ChannelSpatial);
    CHECK(back.train.encoder.stage_channels == cfg.train.encoder.stage_channels);
    CHECK(config_hash(back) == config_hash(cfg));
    PipelineConfig changed = back;
    changed.seed += 1;
    CHECK(config_hash(changed) != config_hash(cfg));
}

TEST_CASE("invalid configs are rejected with specific messages") {
    TempDir tmp;
    PipelineConfig cfg = tiny_config(tmp.path);
    cfg.pairing = "alphabetical";
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("pairing"), std::invalid_argument);
    cfg = tiny_config(tmp.path);
    cfg.output_dir.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config(tmp.path);
    cfg.preprocess.normalization = "zscore";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    CHECK_THROWS_WITH_AS(load_config((tmp.path / "missing.json").string()),
                         doctest::Contains("cannot open"), std::runtime_error);
}

TEST_CASE("preprocess maps to the square grid and back") {
    ImageGrid img(20, 12);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 20; ++x) img.at(x, y) = (x + y) / 32.0;
    BinaryMask mask(20, 12);
    for (int y = 4; y < 9; ++y)
        for (int x = 6; x < 15; ++x) mask.at(x, y) = 1;

    const PreprocessedCase prep = preprocess_case(img, mask, 40);
    CHECK(prep.image.shape == std::vector<int>{1, 1, 40, 40});
    CHECK(prep.orig_w == 20);
    CHECK(prep.orig_h == 12);
    CHECK(prep.pad_x0 == 0);
    CHECK(prep.pad_y0 == 4);
    CHECK(prep.mask.count() > 0);

    // A probability map that is exactly the mask comes back covering it.
    ImageGrid prob(40, 40);
    for (int i = 0; i < 40 * 40; ++i) prob.data[i] = prep.mask.labels[i] ? 1.0 : 0.0;
    const ImageGrid back = prob_to_original(prob, prep);
    CHECK(back.width == 20);
    CHECK(back.height == 12);
    int agree = 0;
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 20; ++x)
            if ((back.at(x, y) >= 0.5) == (mask.at(x, y) != 0)) ++agree;
    CHECK(agree >= 20 * 12 - 24);  // boundary ring may differ after resampling
}

TEST_CASE("mask contour matches the 8-neighborhood boundary oracle") {
    BinaryMask m(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) m.at(x, y) = (x > 0 && y > 0) ? 1 : 0;
    const BinaryMask c = mask_contour(m);
    // Interior pixel (2,2) touches (1,1)..(3,3), all foreground except the
    // border; trace the expected set by hand.
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            bool expect = false;
            if (m.at(x, y)) {
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || nx >= 4 || ny < 0 || ny >= 4 || !m.at(nx, ny))
                            expect = true;
                    }
            }
            CHECK(c.at(x, y) == (expect ? 1 : 0));
        }
}

TEST_CASE("stages refuse to run before their upstream and honor --force") {
    TempDir tmp;
    PipelineConfig cfg = tiny_config(tmp.path / "out");
    fs::create_directories(cfg.output_dir);
    StageOptions opt;

    CHECK_THROWS_WITH_AS(cmd_split(cfg, opt), doctest::Contains("run"), std::runtime_error);
    CHECK_THROWS_WITH_AS(cmd_gen_masks(cfg, opt), doctest::Contains("annotations"),
                         std::runtime_error);

    cmd_phantom(cfg, opt);
    cmd_gen_masks(cfg, opt);
    cmd_cluster(cfg, opt);
    cmd_split(cfg, opt);

    // A config change invalidates the upstream manifest...
    PipelineConfig changed = cfg;
    changed.clustering.k = 3;
    CHECK_THROWS_WITH_AS(cmd_pair(changed, opt), doctest::Contains("--force"),
                         std::runtime_error);
    // ...unless forced.
    StageOptions forced;
    forced.force = true;
    CHECK_NOTHROW(cmd_pair(changed, forced));
}

TEST_CASE("overlay files are side-by-side panels with burned-in contours") {
    TempDir tmp;
    PipelineConfig cfg = tiny_config(tmp.path / "out");
    fs::create_directories(fs::path(cfg.output_dir) / "images");
    fs::create_directories(fs::path(cfg.output_dir) / "gt");
    fs::create_directories(fs::path(cfg.output_dir) / "pred");

    ImageGrid img(30, 30, 0.3);
    BinaryMask gt(30, 30), pred(30, 30);
    for (int y = 10; y < 20; ++y)
        for (int x = 10; x < 20; ++x) {
            gt.at(x, y) = 1;
            pred.at(std::min(29, x + 1), y) = 1;
        }
    write_image_png((fs::path(cfg.output_dir) / "images" / "l0.png").string(), img);
    write_mask_png((fs::path(cfg.output_dir) / "gt" / "l0.png").string(), gt);
    write_mask_png((fs::path(cfg.output_dir) / "pred" / "l0.png").string(), pred);

    cmd_overlay(cfg, StageOptions{}, "pred");
    CHECK(fs::exists(fs::path(cfg.output_dir) / "overlays" / "l0.png"));

    // A prediction with no matching GT id is an error.
    write_mask_png((fs::path(cfg.output_dir) / "pred" / "orphan.png").string(), pred);
    CHECK_THROWS_WITH_AS(cmd_overlay(cfg, StageOptions{}, "pred"),
                         doctest::Contains("orphan"), std::runtime_error);
}

TEST_CASE("tiny pipeline end to end produces every artifact") {
    TempDir tmp;
    const PipelineConfig cfg = tiny_config(tmp.path / "out");
    const EvalReport report = run_full_pipeline(cfg, StageOptions{});
    CHECK(!report.cases.empty());
    for (const char* f :
         {"annotations.csv", "features.csv", "clusters.csv", "split.csv", "pairs_train.csv",
          "pairs_val.csv", "pairs_test.csv", "checkpoint.bin", "loss_curve.csv",
          "report_refined.csv", "report_refined.json"})
        CHECK(fs::exists(fs::path(cfg.output_dir) / f));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "masks_init"));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "refined"));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "overlays"));

    // Scoring the GrabCut masks also works through the same entry point.
    const EvalReport init_report = cmd_evaluate(cfg, StageOptions{}, "masks_init");
    CHECK(init_report.cases.size() == 8);
    CHECK(init_report.dice.mean > 0.5);
}

TEST_CASE("file hashing changes with content") {
    TempDir tmp;
    const auto p = (tmp.path / "x.txt").string();
    std::ofstream(p) << "alpha";
    const auto h1 = hash_file(p);
    std::ofstream(p) << "beta";
    CHECK(hash_file(p) != h1);
    CHECK_THROWS_AS(hash_file((tmp.path / "missing").string()), std::runtime_error);
}
