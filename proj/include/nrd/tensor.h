#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "nrd/error.h"

namespace nrd {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) {
        if (e <= 0) throw ContractError("tensor extent must be positive");
        n *= e;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major n-dimensional array. Values are immutable by convention once
// an operation returns them; ops allocate fresh outputs.
template <typename T>
struct TensorT {
    Shape shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), T(0)) {}
    TensorT(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        check_contract(static_cast<std::int64_t>(data.size()) == shape_numel(shape),
                       "tensor data length does not match shape " + shape_str(shape));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // 2-d [H,W]
    T& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    const T& at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

    // 3-d [H,W,C]
    T& at(int i, int j, int c) {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + c];
    }
    const T& at(int i, int j, int c) const {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + c];
    }

    // 4-d [A,B,C,D]
    T& at(int a, int b, int c, int d) {
        return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    const T& at(int a, int b, int c, int d) const {
        return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

enum class Dtype : std::uint8_t { Real32 = 0, Real64 = 1 };

// Runtime-typed tensor for serialization surfaces.
struct AnyTensor {
    std::variant<TensorF, TensorD> value;

    AnyTensor() : value(TensorF{}) {}
    AnyTensor(TensorF t) : value(std::move(t)) {}
    AnyTensor(TensorD t) : value(std::move(t)) {}

    Dtype dtype() const { return value.index() == 0 ? Dtype::Real32 : Dtype::Real64; }
    bool is_f32() const { return value.index() == 0; }
    const TensorF& f32() const {
        check_contract(is_f32(), "tensor is not real32");
        return std::get<TensorF>(value);
    }
    const TensorD& f64() const {
        check_contract(!is_f32(), "tensor is not real64");
        return std::get<TensorD>(value);
    }
    const Shape& shape() const {
        return is_f32() ? std::get<TensorF>(value).shape : std::get<TensorD>(value).shape;
    }
    std::int64_t numel() const {
        return is_f32() ? std::get<TensorF>(value).numel() : std::get<TensorD>(value).numel();
    }
};

// Segmentation label map; IGNORE pixels take no part in losses or metrics.
constexpr std::uint8_t kIgnoreLabel = 255;

struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;

    LabelMap() = default;
    LabelMap(int h, int w, std::uint8_t fill_value = 0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill_value) {
        check_contract(h > 0 && w > 0, "label map extents must be positive");
    }

    std::uint8_t& at(int i, int j) { return values[static_cast<std::size_t>(i) * width + j]; }
    std::uint8_t at(int i, int j) const { return values[static_cast<std::size_t>(i) * width + j]; }
    std::int64_t pixels() const { return static_cast<std::int64_t>(values.size()); }
};

// Ordered (name, tensor) pairs with unique names; order survives IO round-trips.
class NamedTensorBundle {
public:
    void add(const std::string& name, AnyTensor t) {
        check_contract(!index_.count(name), "duplicate bundle entry: " + name);
        index_[name] = items_.size();
        items_.emplace_back(name, std::move(t));
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const AnyTensor& get(const std::string& name) const {
        auto it = index_.find(name);
        check_contract(it != index_.end(), "missing bundle entry: " + name);
        return items_[it->second].second;
    }
    std::size_t size() const { return items_.size(); }
    const std::pair<std::string, AnyTensor>& entry(std::size_t i) const { return items_[i]; }

private:
    std::vector<std::pair<std::string, AnyTensor>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace nrd
