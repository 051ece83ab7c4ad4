#include "rotatekv/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rotatekv {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 1) throw std::invalid_argument("tensor dimension must be >= 1");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), numel_(shape_numel(shape_)) {
    data_.assign(static_cast<size_t>(numel_), 0.0f);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)), numel_(shape_numel(shape_)) {
    if (numel_ != static_cast<int64_t>(data_.size()))
        throw std::invalid_argument("tensor data length does not match shape");
}

Tensor Tensor::reshape(std::vector<int64_t> newshape) const {
    int64_t n = shape_numel(newshape);
    if (n != numel_) {
        throw std::invalid_argument("reshape mismatch: " + std::to_string(numel_) +
                                    " elements cannot view as " + std::to_string(n));
    }
    return Tensor(std::move(newshape), data_);
}

namespace {

constexpr char kMagic[4] = {'R', 'K', 'V', 'T'};

template <typename T>
void write_le(std::ofstream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw std::runtime_error("dump truncated in header");
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void save_dump(const Tensor& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write(kMagic, 4);
    write_le<uint32_t>(os, kDumpVersion);
    write_le<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape()) write_le<uint64_t>(os, static_cast<uint64_t>(d));
    for (int64_t i = 0; i < t.numel(); ++i) {
        uint32_t bits;
        float f = t[i];
        std::memcpy(&bits, &f, 4);
        write_le<uint32_t>(os, bits);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

Tensor load_dump(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad magic in dump: " + path);
    uint32_t version = read_le<uint32_t>(is);
    if (version != kDumpVersion)
        throw std::runtime_error("unsupported dump version " + std::to_string(version));
    uint32_t ndim = read_le<uint32_t>(is);
    std::vector<int64_t> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int64_t>(read_le<uint64_t>(is));
    int64_t n = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        uint32_t bits;
        unsigned char buf[4];
        is.read(reinterpret_cast<char*>(buf), 4);
        if (!is) throw std::runtime_error("dump payload truncated: " + path);
        bits = static_cast<uint32_t>(buf[0]) | static_cast<uint32_t>(buf[1]) << 8 |
               static_cast<uint32_t>(buf[2]) << 16 | static_cast<uint32_t>(buf[3]) << 24;
        std::memcpy(&data[static_cast<size_t>(i)], &bits, 4);
    }
    return Tensor(std::move(shape), std::move(data));
}

double mse(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

Tensor bhsd_to_rows(const Tensor& x) {
    if (x.ndim() != 4) throw std::invalid_argument("bhsd_to_rows: expected [b,h,s,d]");
    int64_t b = x.dim(0), h = x.dim(1), s = x.dim(2), d = x.dim(3);
    Tensor out({b * s, h * d});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t hi = 0; hi < h; ++hi)
            for (int64_t si = 0; si < s; ++si)
                for (int64_t di = 0; di < d; ++di)
                    out.at2(bi * s + si, hi * d + di) = x.at4(bi, hi, si, di);
    return out;
}

Tensor rows_to_bhsd(const Tensor& rows, int64_t b, int64_t h, int64_t s, int64_t d) {
    if (rows.ndim() != 2 || rows.dim(0) != b * s || rows.dim(1) != h * d)
        throw std::invalid_argument("rows_to_bhsd: shape mismatch");
    Tensor out({b, h, s, d});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t hi = 0; hi < h; ++hi)
            for (int64_t si = 0; si < s; ++si)
                for (int64_t di = 0; di < d; ++di)
                    out.at4(bi, hi, si, di) = rows.at2(bi * s + si, hi * d + di);
    return out;
}

}  // namespace rotatekv
