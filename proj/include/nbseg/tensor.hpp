#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbseg {

// Up to rank 4: (batch, height, width, channels), row-major.
struct Shape {
    std::array<int, 4> dim{1, 1, 1, 1};
    int rank = 0;

    Shape() = default;
    Shape(std::initializer_list<int> extents) {
        if (extents.size() > 4) throw std::invalid_argument("Shape: rank > 4");
        rank = static_cast<int>(extents.size());
        int i = 0;
        for (int e : extents) {
            if (e <= 0) throw std::invalid_argument("Shape: non-positive extent");
            dim[i++] = e;
        }
    }

    int operator[](int i) const { return dim[i]; }
    std::size_t numel() const {
        std::size_t n = 1;
        for (int i = 0; i < rank; ++i) n *= static_cast<std::size_t>(dim[i]);
        return n;
    }
    bool operator==(const Shape& o) const { return rank == o.rank && dim == o.dim; }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < rank; ++i) s += (i ? "," : "") + std::to_string(dim[i]);
        return s + "]";
    }
};

template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // same length as data when requires_grad
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(Shape s, bool rg = false) : shape(s), data(s.numel(), T(0)), requires_grad(rg) {
        if (rg) grad.assign(data.size(), T(0));
    }

    std::size_t numel() const { return data.size(); }

    void ensure_grad() {
        requires_grad = true;
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        for (auto& g : grad) g = T(0);
    }

    // rank-4 accessors
    T& at(int b, int y, int x, int c) {
        return data[((static_cast<std::size_t>(b) * shape.dim[1] + y) * shape.dim[2] + x) * shape.dim[3] + c];
    }
    T at(int b, int y, int x, int c) const {
        return data[((static_cast<std::size_t>(b) * shape.dim[1] + y) * shape.dim[2] + x) * shape.dim[3] + c];
    }
};

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <class T>
TensorPtr<T> make_tensor(Shape s, bool requires_grad = false) {
    return std::make_shared<Tensor<T>>(s, requires_grad);
}

}  // namespace nbseg
