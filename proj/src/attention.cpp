#include "rotatekv/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace rotatekv {

void softmax_inplace(std::span<float> row) {
    float m = row[0];
    for (float x : row) m = std::max(m, x);
    double sum = 0.0;
    for (float& x : row) {
        x = std::exp(x - m);
        sum += x;
    }
    for (float& x : row) x = static_cast<float>(x / sum);
}

Tensor reference_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) {
    if (q.ndim() != 4 || !q.same_shape(k) || !k.same_shape(v))
        throw std::invalid_argument("reference_attention: expected matching [b,h,s,d]");
    int64_t b = q.dim(0), h = q.dim(1), s = q.dim(2), d = q.dim(3);
    Tensor out({b, h, s, d});
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<float> logits(static_cast<size_t>(s));
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t hi = 0; hi < h; ++hi) {
            for (int64_t qi = 0; qi < s; ++qi) {
                int64_t extent = causal ? qi + 1 : s;
                for (int64_t ki = 0; ki < extent; ++ki) {
                    double dot = 0.0;
                    for (int64_t di = 0; di < d; ++di)
                        dot += static_cast<double>(q.at4(bi, hi, qi, di)) * k.at4(bi, hi, ki, di);
                    logits[static_cast<size_t>(ki)] = static_cast<float>(dot * inv_sqrt_d);
                }
                std::span<float> w(logits.data(), static_cast<size_t>(extent));
                softmax_inplace(w);
                for (int64_t di = 0; di < d; ++di) {
                    double acc = 0.0;
                    for (int64_t ki = 0; ki < extent; ++ki)
                        acc += static_cast<double>(w[static_cast<size_t>(ki)]) * v.at4(bi, hi, ki, di);
                    out.at4(bi, hi, qi, di) = static_cast<float>(acc);
                }
            }
        }
    }
    return out;
}

}  // namespace rotatekv
