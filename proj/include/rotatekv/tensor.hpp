#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace rotatekv {

// Dense row-major float tensor. All "full precision" paths in this project
// run in fp32 so that quantization error dominates test tolerances.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<float> data);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return numel_; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2-D / 4-D accessors; no bounds checking beyond debug builds.
    float& at2(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    float at2(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    float& at4(int64_t a, int64_t b, int64_t c, int64_t d) {
        return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }
    float at4(int64_t a, int64_t b, int64_t c, int64_t d) const {
        return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }

    // Same data, new shape; throws on element-count mismatch.
    Tensor reshape(std::vector<int64_t> newshape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<int64_t> shape_;
    std::vector<float> data_;
    int64_t numel_ = 0;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

// "RKVT" binary dump, little-endian throughout:
//   magic "RKVT" | u32 version | u32 ndim | ndim x u64 dims | fp32 payload
inline constexpr uint32_t kDumpVersion = 1;

void save_dump(const Tensor& t, const std::string& path);
Tensor load_dump(const std::string& path);

// Elementwise helpers shared across modules.
double mse(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Layout bridges between the attention view [b,h,s,d] and the per-token
// channel-row view [b*s, h*d] used by calibration and quantization.
Tensor bhsd_to_rows(const Tensor& x);
Tensor rows_to_bhsd(const Tensor& rows, int64_t b, int64_t h, int64_t s, int64_t d);

}  // namespace rotatekv
