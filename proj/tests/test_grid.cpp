#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "coseg/grid.hpp"
#include "coseg/png_io.hpp"
#include "coseg/rng.hpp"

using namespace coseg;

namespace {

ImageGrid random_image(int w, int h, SeededRng& rng) {
    ImageGrid img(w, h);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

BinaryMask random_mask(int w, int h, SeededRng& rng, double p = 0.4) {
    BinaryMask m(w, h);
    for (auto& v : m.labels) v = rng.uniform() < p ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("corner-aligned bilinear: 2x1 [0,1] -> 3x1 [0, 0.5, 1]") {
    ImageGrid img(2, 1);
    img.at(0, 0) = 0.0;
    img.at(1, 0) = 1.0;
    const ImageGrid out = resize_bilinear(img, 3, 1);
    CHECK(out.at(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(out.at(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out.at(2, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("bilinear resize to the same size is the identity") {
    SeededRng rng(1);
    const ImageGrid img = random_image(7, 5, rng);
    const ImageGrid out = resize_bilinear(img, 7, 5);
    CHECK(out.data == img.data);
}

TEST_CASE("bilinear output corners equal input corners") {
    SeededRng rng(2);
    const ImageGrid img = random_image(9, 6, rng);
    const ImageGrid out = resize_bilinear(img, 13, 17);
    CHECK(out.at(0, 0) == doctest::Approx(img.at(0, 0)).epsilon(1e-12));
    CHECK(out.at(12, 0) == doctest::Approx(img.at(8, 0)).epsilon(1e-12));
    CHECK(out.at(0, 16) == doctest::Approx(img.at(0, 5)).epsilon(1e-12));
    CHECK(out.at(12, 16) == doctest::Approx(img.at(8, 5)).epsilon(1e-12));
}

TEST_CASE("nearest-neighbor mask resize: 2x2 checkerboard -> 4x4 blocks") {
    BinaryMask m(2, 2);
    m.at(0, 0) = 1;
    m.at(1, 1) = 1;
    const BinaryMask out = resize_mask_nearest(m, 4, 4);
    // Independent index-map oracle: out(x,y) = in(round(x*(w-1)/(W-1)), ...).
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const int sx = static_cast<int>(std::lround(x * 1.0 / 3.0));
            const int sy = static_cast<int>(std::lround(y * 1.0 / 3.0));
            CHECK(out.at(x, y) == m.at(sx, sy));
        }
    // And it stays binary.
    for (auto v : out.labels) CHECK((v == 0 || v == 1));
}

TEST_CASE("pad_to_square centers and is invertible by cropping") {
    SeededRng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int w = 1 + static_cast<int>(rng.uniform_int(12));
        const int h = 1 + static_cast<int>(rng.uniform_int(12));
        const ImageGrid img = random_image(w, h, rng);
        const ImageGrid sq = pad_to_square(img, -1.0);
        const int s = std::max(w, h);
        REQUIRE(sq.width == s);
        REQUIRE(sq.height == s);
        const int x0 = (s - w) / 2, y0 = (s - h) / 2;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) CHECK(sq.at(x0 + x, y0 + y) == img.at(x, y));
        // Everything outside the crop window is the fill value.
        double fill_sum = 0;
        int fill_count = 0;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                if (x < x0 || x >= x0 + w || y < y0 || y >= y0 + h) {
                    fill_sum += sq.at(x, y);
                    ++fill_count;
                }
        CHECK(fill_sum == doctest::Approx(-1.0 * fill_count));
    }
}

TEST_CASE("normalize maps to [0,1] and is idempotent") {
    SeededRng rng(4);
    ImageGrid img = random_image(8, 8, rng);
    for (auto& v : img.data) v = v * 300.0 - 100.0;
    const ImageGrid n1 = normalize(img);
    const auto [lo, hi] = std::minmax_element(n1.data.begin(), n1.data.end());
    CHECK(*lo == doctest::Approx(0.0));
    CHECK(*hi == doctest::Approx(1.0));
    const ImageGrid n2 = normalize(n1);
    for (std::size_t i = 0; i < n1.size(); ++i)
        CHECK(n2.data[i] == doctest::Approx(n1.data[i]).epsilon(1e-12));
}

TEST_CASE("normalize of a constant image is all zeros") {
    const ImageGrid img(5, 5, 3.7);
    const ImageGrid n = normalize(img);
    for (double v : n.data) CHECK(v == 0.0);
}

TEST_CASE("dilation is monotone and contains the input") {
    SeededRng rng(5);
    const BinaryMask m = random_mask(16, 16, rng, 0.15);
    const BinaryMask d1 = dilate(m, 1);
    const BinaryMask d2 = dilate(m, 2);
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(d1.labels[i] >= m.labels[i]);
        CHECK(d2.labels[i] >= d1.labels[i]);
    }
    // radius 0 is the identity
    CHECK(dilate(m, 0) == m);
}

TEST_CASE("dilation radius 1 disc oracle on a point") {
    BinaryMask m(7, 7);
    m.at(3, 3) = 1;
    const BinaryMask d = dilate(m, 1);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
            const bool in = (x - 3) * (x - 3) + (y - 3) * (y - 3) <= 1;
            CHECK(d.at(x, y) == (in ? 1 : 0));
        }
}

TEST_CASE("png image roundtrip within 16-bit quantization") {
    SeededRng rng(6);
    const ImageGrid img = random_image(11, 7, rng);
    const auto path = std::filesystem::temp_directory_path() / "coseg_test_img.png";
    write_image_png(path.string(), img);
    const ImageGrid back = read_image_png(path.string());
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-4));
    std::filesystem::remove(path);
}

TEST_CASE("png mask roundtrip is exact") {
    SeededRng rng(7);
    const BinaryMask m = random_mask(13, 9, rng);
    const auto path = std::filesystem::temp_directory_path() / "coseg_test_mask.png";
    write_mask_png(path.string(), m);
    CHECK(read_mask_png(path.string()) == m);
    std::filesystem::remove(path);
}

TEST_CASE("rng streams are reproducible and forks are independent") {
    SeededRng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    SeededRng f1 = SeededRng(123).fork(1);
    SeededRng f2 = SeededRng(123).fork(2);
    CHECK(f1.next_u64() != f2.next_u64());
    // uniform stays in [0,1)
    SeededRng c(9);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("rng shuffle is a permutation and seed-stable") {
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    SeededRng r1(42), r2(42);
    auto v1 = v, v2 = v;
    r1.shuffle(v1);
    r2.shuffle(v2);
    CHECK(v1 == v2);
    std::sort(v1.begin(), v1.end());
    CHECK(v1 == v);
}
