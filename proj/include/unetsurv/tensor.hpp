#ifndef UNETSURV_TENSOR_HPP
#define UNETSURV_TENSOR_HPP

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace unetsurv::ad {

inline std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: shape dims must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

// Dense N-dimensional value, row-major (last dim fastest). Network activations
// use the layout [channels, x, y, z].
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<T> d, bool rg = false)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        if (data.size() != numel(shape))
            throw std::invalid_argument("tensor: data length does not match shape");
    }

    static Tensor zeros(std::vector<int> s, bool rg = false) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<T>(n, T(0)), rg);
    }
    static Tensor full(std::vector<int> s, T value, bool rg = false) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<T>(n, value), rg);
    }

    std::size_t size() const { return data.size(); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.requires_grad = requires_grad;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace unetsurv::ad

#endif
