#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace coseg {

// Row-major N-d array of doubles. Network math runs in double so the
// finite-difference gradient checks are meaningful; checkpoints store
// float32 payloads.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(element_count(shape), fill);
    }

    static std::size_t element_count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int e : s) {
            if (e < 1) throw std::invalid_argument("Tensor: extents must be >= 1");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

    std::size_t size() const { return data.size(); }
    int dim(int i) const { return shape[i]; }
    int rank() const { return static_cast<int>(shape.size()); }

    // NCHW accessor.
    double& at4(int n, int c, int y, int x) {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    double at4(int n, int c, int y, int x) const {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

inline void require_shape(const Tensor& t, const std::vector<int>& shape, const char* what) {
    if (t.shape != shape)
        throw std::invalid_argument(std::string(what) + ": unexpected shape " + t.shape_str());
}

}  // namespace coseg
