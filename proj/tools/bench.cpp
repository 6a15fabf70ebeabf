// Timing comparison of the OpenMP kernels against the serial references.
#include <chrono>
#include <cmath>
#include <cstdio>

#include "coseg/crf.hpp"
#include "coseg/kernels.hpp"
#include "coseg/rng.hpp"

using namespace coseg;

namespace {

Tensor random_tensor(const std::vector<int>& shape, SeededRng& rng) {
    Tensor t(shape);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

template <typename F>
double time_ms(int reps, F&& fn) {
    fn();  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
    SeededRng rng(42);

    const Tensor input = random_tensor({2, 8, 64, 64}, rng);
    const Tensor weights = random_tensor({16, 8, 3, 3}, rng);
    const Tensor bias = random_tensor({16}, rng);
    const ConvGeom geom{1, 1, 1};

    const double conv_omp =
        time_ms(5, [&] { kernels::conv2d_forward(input, weights, bias, geom); });
    const double conv_ser = time_ms(5, [&] { serial::conv2d_forward(input, weights, bias, geom); });
    std::printf("conv2d 2x8x64x64 -> 16ch   omp %8.2f ms   serial %8.2f ms   speedup %.2fx\n",
                conv_omp, conv_ser, conv_ser / conv_omp);

    const int W = 64, H = 64;
    ImageGrid img(W, H);
    for (auto& v : img.data) v = rng.uniform();
    UnaryField unary;
    unary.width = W;
    unary.height = H;
    unary.bg.assign(img.size(), 0.7);
    unary.fg.assign(img.size(), 0.3);
    const CrfParams params;
    const double crf_omp = time_ms(3, [&] { meanfield_refine(img, unary, params); });
    const double crf_ser = time_ms(3, [&] {
        LabelDistribution q{W, H, std::vector<double>(img.size())};
        for (std::size_t i = 0; i < img.size(); ++i) {
            const double efg = std::exp(-unary.fg[i]), ebg = std::exp(-unary.bg[i]);
            q.fg[i] = efg / (efg + ebg);
        }
        for (int i = 0; i < params.iterations; ++i)
            q = serial::meanfield_iteration(img, unary, params, q);
    });
    std::printf("dense CRF 64x64, 5 iters   omp %8.2f ms   serial %8.2f ms   speedup %.2fx\n",
                crf_omp, crf_ser, crf_ser / crf_omp);
    return 0;
}
