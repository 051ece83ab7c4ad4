#include "rotatekv/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "rotatekv/attention.hpp"
#include "rotatekv/rng.hpp"

namespace rotatekv {

Tensor matmul_rows(const Tensor& rows, const Tensor& w) {
    if (rows.ndim() != 2 || w.ndim() != 2 || rows.dim(1) != w.dim(0))
        throw std::invalid_argument("matmul_rows: inner dimensions must agree");
    int64_t n = rows.dim(0), k = rows.dim(1), m = w.dim(1);
    Tensor out({n, m});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t kk = 0; kk < k; ++kk) {
            float a = rows.at2(i, kk);
            if (a == 0.0f) continue;
            const float* wrow = w.data() + kk * m;
            float* orow = out.data() + i * m;
            for (int64_t j = 0; j < m; ++j) orow[j] += a * wrow[j];
        }
    }
    return out;
}

AttentionWeights random_weights(int64_t d_model, uint64_t seed) {
    AttentionWeights w;
    double scale = 1.0 / std::sqrt(static_cast<double>(d_model));
    auto gen = [&](uint64_t stream) {
        Tensor t({d_model, d_model});
        CounterRng rng(seed ^ (stream * 0xA24BAED4963EE407ULL));
        for (int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<float>(rng.normal(static_cast<uint64_t>(i)) * scale);
        return t;
    };
    w.wq = gen(1);
    w.wk = gen(2);
    w.wv = gen(3);
    w.wo = gen(4);
    return w;
}

namespace {

// Right-multiplication by the block-diagonal Walsh-Hadamard matrix: the
// matrix is symmetric, so each weight row transforms by the row rotation.
Tensor fold_rotation_right(const Tensor& w, const RotationPlan& plan) {
    return rotate_rows(w, plan, false);
}

// Left-multiplication (R * W): rotate each column.
Tensor fold_rotation_left(const Tensor& w, const RotationPlan& plan) {
    int64_t n = w.dim(0), m = w.dim(1);
    Tensor out = w;
    std::vector<float> col(static_cast<size_t>(n));
    for (int64_t j = 0; j < m; ++j) {
        for (int64_t i = 0; i < n; ++i) col[static_cast<size_t>(i)] = out.at2(i, j);
        rotate_row_inplace(col, plan);
        for (int64_t i = 0; i < n; ++i) out.at2(i, j) = col[static_cast<size_t>(i)];
    }
    return out;
}

std::vector<int64_t> iota_positions(int64_t n) {
    std::vector<int64_t> p(static_cast<size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    return p;
}

Tensor quantize_dequantize_rows(const Tensor& rows, const QuantConfig& cfg) {
    Tensor out = rows;
    int64_t c = rows.dim(1);
    for (int64_t r = 0; r < rows.dim(0); ++r) {
        std::span<const float> row(rows.data() + r * c, static_cast<size_t>(c));
        auto deq = dequantize_token(quantize_token(row, cfg), cfg);
        std::copy(deq.begin(), deq.end(), out.data() + r * c);
    }
    return out;
}

}  // namespace

void fuse_weights(AttentionWeights& w, const RotationPlan& key_rotation, const ReorderPlan& reorder,
                  const RotationPlan& value_rotation) {
    auto fold_key_side = [&](const Tensor& m) {
        Tensor rotated = fold_rotation_right(m, key_rotation);
        return apply_reorder(rotated, reorder, 0, false);
    };
    w.wq_f = fold_key_side(w.wq);
    w.wk_f = fold_key_side(w.wk);
    w.wv_f = fold_rotation_right(w.wv, value_rotation);
    w.wo_f = fold_rotation_left(w.wo, value_rotation);
    w.fused = true;
}

ReorderPlan calibrate_pipeline_reorder(const Tensor& x_calib, const AttentionWeights& w,
                                       const RotationPlan& key_rotation) {
    Tensor rows = x_calib.ndim() == 3
                      ? x_calib.reshape({x_calib.dim(0) * x_calib.dim(1), x_calib.dim(2)})
                      : x_calib;
    Tensor k = matmul_rows(rows, w.wk);
    Tensor k_rot = rotate_rows(k, key_rotation, false);
    return calibrate_reorder({k_rot});
}

PipelineConfig PipelineConfig::make(PipelineMode mode, int64_t num_heads, int64_t head_dim,
                                    int64_t heads_per_group, const QuantConfig& quant,
                                    bool quant_enabled) {
    PipelineConfig cfg;
    cfg.mode = mode;
    cfg.quant = quant;
    cfg.quant_enabled = quant_enabled;
    cfg.num_heads = num_heads;
    cfg.key_rotation = RotationPlan::make(head_dim, heads_per_group, num_heads);
    cfg.value_rotation = RotationPlan::make(head_dim, 1, num_heads);
    cfg.rope.head_dim = head_dim;
    cfg.reorder = ReorderPlan::identity(1, num_heads * head_dim);
    return cfg;
}

namespace {

struct Recon {
    Tensor k_rope_rows;  // fully reconstructed, RoPE applied
    Tensor v_rows;       // as stored (value-rotated under RotateKV)
};

Recon reconstruct_cache(const LayerKVCache& cache, const PipelineConfig& cfg) {
    Recon r{cache.keys(), cache.values()};
    if (cfg.mode == PipelineMode::RotateKV) {
        r.k_rope_rows = apply_reorder(r.k_rope_rows, cfg.reorder, 0, true);
        r.k_rope_rows = rotate_rows(r.k_rope_rows, cfg.key_rotation, true);
    }
    auto positions = iota_positions(cache.size());
    r.k_rope_rows = apply_rope_rows(r.k_rope_rows, cfg.rope, cfg.num_heads, positions);
    return r;
}

Tensor prepare_queries(const Tensor& q_rows, const PipelineConfig& cfg,
                       std::span<const int64_t> positions) {
    Tensor q = q_rows;
    if (cfg.mode == PipelineMode::RotateKV) {
        q = apply_reorder(q, cfg.reorder, 0, true);
        q = rotate_rows(q, cfg.key_rotation, true);
    }
    return apply_rope_rows(q, cfg.rope, cfg.num_heads, positions);
}

}  // namespace

PrefillResult prefill(const Tensor& x, const AttentionWeights& w, const PipelineConfig& cfg,
                      const SinkSet* extra_sinks) {
    if (x.ndim() != 3 || x.dim(0) != 1)
        throw std::invalid_argument("prefill: expected [1, l_prompt, d_model]");
    bool rotatekv = cfg.mode == PipelineMode::RotateKV;
    if (rotatekv && !w.fused) throw std::invalid_argument("prefill: weights not fused");
    int64_t l = x.dim(1), dm = x.dim(2);
    if (dm != cfg.num_heads * cfg.rope.head_dim)
        throw std::invalid_argument("prefill: d_model must equal h*d");

    Tensor rows = x.reshape({l, dm});
    Tensor k = matmul_rows(rows, rotatekv ? w.wk_f : w.wk);
    Tensor v = matmul_rows(rows, rotatekv ? w.wv_f : w.wv);
    Tensor q = matmul_rows(rows, rotatekv ? w.wq_f : w.wq);

    LayerKVCache cache(cfg.quant, dm);
    for (int64_t t = 0; t < l; ++t) {
        bool sink = !cfg.quant_enabled || t == 0 || (extra_sinks && extra_sinks->contains(t));
        cache.append(std::span<const float>(k.data() + t * dm, static_cast<size_t>(dm)),
                     std::span<const float>(v.data() + t * dm, static_cast<size_t>(dm)), sink);
    }

    Recon recon = reconstruct_cache(cache, cfg);
    auto positions = iota_positions(l);
    Tensor q_ready = prepare_queries(q, cfg, positions);

    int64_t h = cfg.num_heads, d = cfg.rope.head_dim;
    Tensor attn = reference_attention(rows_to_bhsd(q_ready, 1, h, l, d),
                                      rows_to_bhsd(recon.k_rope_rows, 1, h, l, d),
                                      rows_to_bhsd(recon.v_rows, 1, h, l, d), /*causal=*/true);
    Tensor out_rows = matmul_rows(bhsd_to_rows(attn), rotatekv ? w.wo_f : w.wo);

    PrefillResult res{std::move(cache), out_rows.reshape({1, l, dm}), Tensor({1, l, dm})};
    for (int64_t i = 0; i < x.numel(); ++i) res.block_output[i] = x[i] + res.output[i];
    return res;
}

Tensor decode_step(const Tensor& t_row, LayerKVCache& cache, const AttentionWeights& w,
                   const PipelineConfig& cfg, int64_t position, DecodeMemo* memo) {
    if (t_row.numel() != cache.channels())
        throw std::invalid_argument("decode_step: input must have d_model elements");
    if (position != cache.size())
        throw std::invalid_argument("decode_step: position must equal current cache length");
    bool rotatekv = cfg.mode == PipelineMode::RotateKV;
    if (rotatekv && !w.fused) throw std::invalid_argument("decode_step: weights not fused");
    int64_t dm = cache.channels(), h = cfg.num_heads, d = cfg.rope.head_dim;

    Tensor row = t_row.reshape({1, dm});
    Tensor tk = matmul_rows(row, rotatekv ? w.wk_f : w.wk);
    Tensor tv = matmul_rows(row, rotatekv ? w.wv_f : w.wv);
    Tensor tq = matmul_rows(row, rotatekv ? w.wq_f : w.wq);
    cache.append(std::span<const float>(tk.data(), static_cast<size_t>(dm)),
                 std::span<const float>(tv.data(), static_cast<size_t>(dm)),
                 /*sink=*/!cfg.quant_enabled);

    int64_t n = cache.size();
    Tensor k_rope({n, dm});
    Tensor v_rows({n, dm});
    if (memo) {
        // Reconstructed post-RoPE Keys are position-fixed; only new tokens
        // need the dequantize + inverse-transform + RoPE work.
        for (int64_t t = static_cast<int64_t>(memo->k_post_rope.size()); t < n; ++t) {
            Tensor one({1, dm}, cache.key_row(t));
            if (rotatekv) {
                one = apply_reorder(one, cfg.reorder, 0, true);
                one = rotate_rows(one, cfg.key_rotation, true);
            }
            std::vector<int64_t> pos{t};
            one = apply_rope_rows(one, cfg.rope, h, pos);
            memo->k_post_rope.emplace_back(one.data(), one.data() + dm);
            memo->v_rows.push_back(cache.value_row(t));
        }
        for (int64_t t = 0; t < n; ++t) {
            std::copy(memo->k_post_rope[static_cast<size_t>(t)].begin(),
                      memo->k_post_rope[static_cast<size_t>(t)].end(), k_rope.data() + t * dm);
            std::copy(memo->v_rows[static_cast<size_t>(t)].begin(),
                      memo->v_rows[static_cast<size_t>(t)].end(), v_rows.data() + t * dm);
        }
    } else {
        Recon recon = reconstruct_cache(cache, cfg);
        k_rope = std::move(recon.k_rope_rows);
        v_rows = std::move(recon.v_rows);
    }

    std::vector<int64_t> qpos{position};
    Tensor q_ready = prepare_queries(tq, cfg, qpos);

    // Single-query attention over the full cache, per head.
    Tensor out_rows({1, dm});
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<float> logits(static_cast<size_t>(n));
    for (int64_t hi = 0; hi < h; ++hi) {
        for (int64_t t = 0; t < n; ++t) {
            double dot = 0.0;
            for (int64_t di = 0; di < d; ++di)
                dot += static_cast<double>(q_ready[hi * d + di]) * k_rope.at2(t, hi * d + di);
            logits[static_cast<size_t>(t)] = static_cast<float>(dot * inv_sqrt_d);
        }
        softmax_inplace(logits);
        for (int64_t di = 0; di < d; ++di) {
            double acc = 0.0;
            for (int64_t t = 0; t < n; ++t)
                acc += static_cast<double>(logits[static_cast<size_t>(t)]) * v_rows.at2(t, hi * d + di);
            out_rows[hi * d + di] = static_cast<float>(acc);
        }
    }
    return matmul_rows(out_rows, rotatekv ? w.wo_f : w.wo).reshape({1, dm});
}

std::string comparison_mode_name(ComparisonMode m) {
    switch (m) {
        case ComparisonMode::PreRopeRotateReorder: return "pre-rope-rotate-reorder";
        case ComparisonMode::PreRopeRotateOnly: return "pre-rope-rotate-only";
        case ComparisonMode::PostRopeRotateReorder: return "post-rope-rotate-reorder";
        case ComparisonMode::PostRopeRotateOnly: return "post-rope-rotate-only";
    }
    throw std::invalid_argument("unknown comparison mode");
}

std::string report_csv_header() {
    return "mode,bits,group_size,heads_per_group,key_mse,attn_mse,flops_per_layer,avg_bits,sink_count";
}

void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open for write: " + tmp);
        os << report_csv_header() << "\n";
        for (const auto& r : rows) {
            os << r.mode << "," << r.bits << "," << r.group_size << "," << r.heads_per_group << ","
               << r.key_mse << "," << r.attn_mse << "," << r.flops_per_layer << "," << r.avg_bits
               << "," << r.sink_count << "\n";
        }
        if (!os) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

std::vector<ReportRow> compare_pipelines(const KVWorkload& w, const std::vector<ComparisonMode>& modes,
                                         const RotationPlan& rotation, const QuantConfig& quant,
                                         const RopeConfig& rope) {
    int64_t b = w.keys.dim(0), h = w.keys.dim(1), s = w.keys.dim(2), d = w.keys.dim(3);
    Tensor k_rows = bhsd_to_rows(w.keys);
    std::vector<int64_t> positions(static_cast<size_t>(b * s));
    for (int64_t r = 0; r < b * s; ++r) positions[static_cast<size_t>(r)] = r % s;

    Tensor k_rope_rows = apply_rope_rows(k_rows, rope, h, positions);
    Tensor k_rope = rows_to_bhsd(k_rope_rows, b, h, s, d);
    std::vector<int64_t> pos_s = positions;
    Tensor q_rope = apply_rope(w.queries, rope, std::span<const int64_t>(pos_s.data(), static_cast<size_t>(s)));
    Tensor attn_ref = reference_attention(q_rope, k_rope, w.values, /*causal=*/false);

    std::vector<ReportRow> out;
    for (ComparisonMode mode : modes) {
        bool pre = mode == ComparisonMode::PreRopeRotateReorder ||
                   mode == ComparisonMode::PreRopeRotateOnly;
        bool reorder_on = mode == ComparisonMode::PreRopeRotateReorder ||
                          mode == ComparisonMode::PostRopeRotateReorder;

        Tensor base = pre ? k_rows : k_rope_rows;
        Tensor t = rotate_rows(base, rotation, false);
        ReorderPlan plan;
        if (reorder_on) {
            plan = calibrate_reorder({t});
            t = apply_reorder(t, plan, 0, false);
        }
        t = quantize_dequantize_rows(t, quant);
        if (reorder_on) t = apply_reorder(t, plan, 0, true);
        t = rotate_rows(t, rotation, true);
        if (pre) t = apply_rope_rows(t, rope, h, positions);

        Tensor khat = rows_to_bhsd(t, b, h, s, d);
        ReportRow row;
        row.mode = comparison_mode_name(mode);
        row.bits = quant.bits;
        row.group_size = quant.group_size;
        row.heads_per_group = rotation.heads_per_group;
        row.key_mse = mse(khat, k_rope);
        row.attn_mse = mse(reference_attention(q_rope, khat, w.values, false), attn_ref);
        row.flops_per_layer = rotation_flops(rotation);
        row.avg_bits = average_bits(quant, 0.0);
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<ReportRow> grouped_head_sweep(const KVWorkload& w, const std::vector<int64_t>& group_sizes,
                                          const QuantConfig& quant) {
    int64_t b = w.keys.dim(0), h = w.keys.dim(1), s = w.keys.dim(2), d = w.keys.dim(3);
    Tensor k_rows = bhsd_to_rows(w.keys);
    Tensor attn_ref = reference_attention(w.queries, w.keys, w.values, /*causal=*/false);

    std::vector<ReportRow> out;
    for (int64_t g : group_sizes) {
        RotationPlan plan = RotationPlan::make(d, g, h);  // throws on invalid group size
        Tensor t = rotate_rows(k_rows, plan, false);
        t = quantize_dequantize_rows(t, quant);
        t = rotate_rows(t, plan, true);

        Tensor khat = rows_to_bhsd(t, b, h, s, d);
        ReportRow row;
        row.mode = "grouped-head-sweep";
        row.bits = quant.bits;
        row.group_size = quant.group_size;
        row.heads_per_group = g;
        row.key_mse = mse(khat, w.keys);
        row.attn_mse = mse(reference_attention(w.queries, khat, w.values, false), attn_ref);
        row.flops_per_layer = rotation_flops(plan);
        row.avg_bits = average_bits(quant, 0.0);
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace rotatekv
