#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "coseg/net.hpp"

using namespace coseg;

namespace {

EncoderConfig tiny_encoder(EncoderVariant v = EncoderVariant::DrnS) {
    EncoderConfig enc;
    enc.variant = v;
    enc.stage_channels = {2, 3, 4, 4};
    enc.decoder_channels = 3;
    return enc;
}

Tensor random_image(int size, SeededRng& rng) {
    Tensor t({1, 1, size, size});
    for (auto& v : t.data) v = rng.uniform();
    return t;
}

BinaryMask center_mask(int size) {
    BinaryMask m(size, size);
    for (int y = size / 4; y < 3 * size / 4; ++y)
        for (int x = size / 4; x < 3 * size / 4; ++x) m.at(x, y) = 1;
    return m;
}

}  // namespace

TEST_CASE("swapping the input pair swaps the outputs bit-exactly") {
    for (auto att : {AttentionKind::Channel, AttentionKind::ChannelSpatial}) {
        SeededRng init(1);
        const CosegNet net(tiny_encoder(), att, init);
        SeededRng rng(2);
        for (int trial = 0; trial < 10; ++trial) {
            const Tensor a = random_image(16, rng);
            const Tensor b = random_image(16, rng);
            const auto [fa, fb] = net.infer_pair(a, b);
            const auto [gb, ga] = net.infer_pair(b, a);
            CHECK(fa.data == ga.data);
            CHECK(fb.data == gb.data);
        }
    }
}

TEST_CASE("identical inputs produce identical outputs bit-exactly") {
    SeededRng init(3);
    const CosegNet net(tiny_encoder(), AttentionKind::ChannelSpatial, init);
    SeededRng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = random_image(16, rng);
        const auto [fa, fb] = net.infer_pair(a, a);
        CHECK(fa.data == fb.data);
    }
}

TEST_CASE("encoder variants preserve the output resolution end to end") {
    SeededRng rng(5);
    const Tensor img = random_image(32, rng);
    for (auto v : {EncoderVariant::VggS, EncoderVariant::ResnetS, EncoderVariant::DrnS}) {
        SeededRng init(6);
        const CosegNet net(tiny_encoder(v), AttentionKind::Channel, init);
        const auto [fa, fb] = net.infer_pair(img, img);
        CHECK(fa.shape == std::vector<int>{1, 1, 32, 32});
        for (double p : fa.data) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    }
}

TEST_CASE("zero-initialized attention gates start at exactly 0.5") {
    // fc2 and the spatial conv are zero-initialized, so the first forward's
    // channel gate is sigmoid(0) = 0.5 regardless of the inputs; attention
    // halves the features of both branches identically, which the None
    // variant reproduces up to that constant. Verify through the decoder
    // equivalence on a single-branch forward.
    SeededRng init(7);
    CosegNet net(tiny_encoder(), AttentionKind::Channel, init);
    const int fc2_w = net.params().index_of("att.fc2.w");
    for (double v : net.params().value(fc2_w).data) CHECK(v == 0.0);
    SeededRng init2(7);
    CosegNet csa(tiny_encoder(), AttentionKind::ChannelSpatial, init2);
    const int sp_w = csa.params().index_of("att.spatial.w");
    for (double v : csa.params().value(sp_w).data) CHECK(v == 0.0);
}

TEST_CASE("residual variants add projections only when widths change") {
    SeededRng init(8);
    EncoderConfig enc = tiny_encoder(EncoderVariant::ResnetS);
    enc.stage_channels = {2, 2, 4, 4};  // widths change only entering s3
    const CosegNet net(enc, AttentionKind::None, init);
    CHECK(net.params().contains("s3.proj.w"));
    CHECK(!net.params().contains("s1.proj.w"));
    CHECK(!net.params().contains("s2.proj.w"));
    CHECK(!net.params().contains("s4.proj.w"));
    SeededRng init2(8);
    const CosegNet vgg(tiny_encoder(EncoderVariant::VggS), AttentionKind::None, init2);
    CHECK(!vgg.params().contains("s2.proj.w"));
}

TEST_CASE("full drn-s + channel-spatial-attention network passes a gradient check") {
    SeededRng init(9);
    EncoderConfig enc;
    enc.variant = EncoderVariant::DrnS;
    enc.stage_channels = {2, 2, 3, 3};
    enc.decoder_channels = 2;
    CosegNet net(enc, AttentionKind::ChannelSpatial, init);

    // Jitter every parameter off its initial value: zero-initialized biases
    // put whole channels exactly on the ReLU kink, where the one-sided
    // subgradient and a finite difference legitimately disagree.
    SeededRng jitter(11);
    for (int p = 0; p < static_cast<int>(net.params().count()); ++p)
        for (double& v : net.params().value(p).data) v += jitter.uniform(-0.05, 0.05);

    SeededRng rng(10);
    const Tensor a = random_image(16, rng);
    const Tensor b = random_image(16, rng);
    const std::vector<BinaryMask> ta{center_mask(16)};
    const std::vector<BinaryMask> tb{center_mask(16)};

    auto loss_value = [&] {
        Graph g;
        const auto out = net.forward_siamese(g, a, b);
        const auto la = op_softmax_cross_entropy(g, out.logits_a, ta);
        const auto lb = op_softmax_cross_entropy(g, out.logits_b, tb);
        return g.value(op_mean2(g, la, lb)).data[0];
    };

    Graph g;
    const auto out = net.forward_siamese(g, a, b);
    const auto la = op_softmax_cross_entropy(g, out.logits_a, ta);
    const auto lb = op_softmax_cross_entropy(g, out.logits_b, tb);
    g.backward(op_mean2(g, la, lb));
    net.params().zero_grads();
    net.collect_grads(g, out.param_nodes);

    // Spot-check a deterministic subsample of every parameter tensor.
    // ReLU/max-pool kinks can fall inside a finite-difference window and
    // pollute the numeric estimate, so retry with smaller steps and keep
    // the best agreement: a genuine gradient bug fails at every step.
    int checked = 0;
    for (int p = 0; p < static_cast<int>(net.params().count()); ++p) {
        Tensor& value = net.params().value(p);
        const Tensor& grad = net.params().grad(p);
        const std::size_t stride = std::max<std::size_t>(1, value.data.size() / 4);
        for (std::size_t j = 0; j < value.data.size(); j += stride) {
            double best = std::numeric_limits<double>::infinity();
            for (const double step : {1e-4, 1e-5, 1e-6}) {
                const double orig = value.data[j];
                value.data[j] = orig + step;
                const double up = loss_value();
                value.data[j] = orig - step;
                const double down = loss_value();
                value.data[j] = orig;
                const double numeric = (up - down) / (2 * step);
                const double denom =
                    std::max({std::abs(numeric), std::abs(grad.data[j]), 1e-4});
                best = std::min(best, std::abs(numeric - grad.data[j]) / denom);
                if (best <= 1e-3) break;
            }
            INFO("param ", net.params().name(p), " index ", j);
            CHECK(best <= 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 50);
}

TEST_CASE("Adam first step is approximately -lr * sign(gradient)") {
    ParamStore store;
    Tensor t({1});
    t.data[0] = 0.7;
    store.add("theta", t);
    store.grad(0).data[0] = 2.5;
    AdamState adam(store);
    AdamConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    adam.step(store, cfg);
    // Bias-corrected m-hat/sqrt(v-hat) = g/|g| on step one, up to eps.
    CHECK(store.value(0).data[0] == doctest::Approx(0.7 - 0.01).epsilon(1e-6));

    ParamStore neg;
    neg.add("theta", t);
    neg.grad(0).data[0] = -0.3;
    AdamState adam2(neg);
    adam2.step(neg, cfg);
    CHECK(neg.value(0).data[0] == doctest::Approx(0.7 + 0.01).epsilon(1e-6));
}

TEST_CASE("checkpoint roundtrip restores every parameter exactly at float precision") {
    SeededRng init(11);
    CosegNet net(tiny_encoder(), AttentionKind::Channel, init);
    // Perturb so the payload is nontrivial.
    SeededRng rng(12);
    for (int p = 0; p < static_cast<int>(net.params().count()); ++p)
        for (auto& v : net.params().value(p).data) v += rng.normal(0.0, 0.1);

    const auto path = std::filesystem::temp_directory_path() / "coseg_test_ckpt.bin";
    save_checkpoint(path.string(), net.params());

    SeededRng init2(13);  // different seed: different weights before loading
    CosegNet other(tiny_encoder(), AttentionKind::Channel, init2);
    load_checkpoint(path.string(), other.params());
    for (int p = 0; p < static_cast<int>(net.params().count()); ++p) {
        const auto& a = net.params().value(p).data;
        const auto& b = other.params().value(p).data;
        for (std::size_t j = 0; j < a.size(); ++j)
            CHECK(b[j] == doctest::Approx(a[j]).epsilon(1e-6));  // float32 payload
    }

    // Mismatched architecture is rejected.
    SeededRng init3(14);
    EncoderConfig bigger = tiny_encoder();
    bigger.stage_channels = {3, 3, 4, 4};
    CosegNet wrong(bigger, AttentionKind::Channel, init3);
    CHECK_THROWS_AS(load_checkpoint(path.string(), wrong.params()), std::runtime_error);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin", net.params()), std::runtime_error);
}

TEST_CASE("a short training run reduces the loss") {
    SeededRng init(15);
    EncoderConfig enc = tiny_encoder();
    CosegNet net(enc, AttentionKind::Channel, init);

    SampleMap samples;
    SeededRng rng(16);
    for (int i = 0; i < 4; ++i) {
        const std::string id = "s" + std::to_string(i);
        Tensor img({1, 1, 16, 16});
        const BinaryMask mask = center_mask(16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                img.at4(0, 0, y, x) =
                    (mask.at(x, y) ? 0.8 : 0.2) + rng.normal(0.0, 0.02);
        samples[id] = TrainSample{img, mask};
    }
    PairSet train{"train", {{"s0", "s1", 0}, {"s2", "s3", 0}}};
    PairSet val{"val", {{"s0", "s2", 0}}};

    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.iterations = 40;
    cfg.val_interval = 20;
    cfg.seed = 5;
    cfg.encoder = enc;
    const TrainResult result = train_pairs(net, train, val, samples, cfg);
    REQUIRE(result.curve.size() == 40);
    double best = result.curve.front().train_loss;
    for (const auto& p : result.curve) best = std::min(best, p.train_loss);
    CHECK(best < result.curve.front().train_loss);
    CHECK(result.curve.back().train_loss < result.curve.front().train_loss);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto run = [] {
        SeededRng init(17);
        EncoderConfig enc = tiny_encoder();
        CosegNet net(enc, AttentionKind::Channel, init);
        SampleMap samples;
        SeededRng rng(18);
        for (int i = 0; i < 2; ++i) {
            Tensor img({1, 1, 16, 16});
            for (auto& v : img.data) v = rng.uniform();
            samples["s" + std::to_string(i)] = TrainSample{img, center_mask(16)};
        }
        PairSet train{"train", {{"s0", "s1", 0}}};
        TrainConfig cfg;
        cfg.batch_size = 1;
        cfg.iterations = 5;
        cfg.val_interval = 100;
        cfg.seed = 3;
        cfg.encoder = enc;
        train_pairs(net, train, {}, samples, cfg);
        std::vector<double> flat;
        for (int p = 0; p < static_cast<int>(net.params().count()); ++p)
            for (double v : net.params().value(p).data) flat.push_back(v);
        return flat;
    };
    CHECK(run() == run());
}

TEST_CASE("string conversions roundtrip and reject junk") {
    for (auto v : {EncoderVariant::VggS, EncoderVariant::ResnetS, EncoderVariant::DrnS})
        CHECK(encoder_variant_from_string(to_string(v)) == v);
    for (auto a : {AttentionKind::None, AttentionKind::Channel, AttentionKind::ChannelSpatial})
        CHECK(attention_kind_from_string(to_string(a)) == a);
    CHECK_THROWS_AS(encoder_variant_from_string("vgg-19"), std::invalid_argument);
    CHECK_THROWS_AS(attention_kind_from_string("full"), std::invalid_argument);
}
