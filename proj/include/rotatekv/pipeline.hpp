#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rotatekv/hadamard.hpp"
#include "rotatekv/kv_cache.hpp"
#include "rotatekv/quant.hpp"
#include "rotatekv/reorder.hpp"
#include "rotatekv/rope.hpp"
#include "rotatekv/sink.hpp"
#include "rotatekv/workload.hpp"

namespace rotatekv {

// Row-major matmul of token rows against a [d_in, d_out] weight.
Tensor matmul_rows(const Tensor& rows, const Tensor& w);

struct AttentionWeights {
    Tensor wq, wk, wv, wo;          // [d_model, d_model]
    Tensor wq_f, wk_f, wv_f, wo_f;  // rotation/reorder folded in
    bool fused = false;
};

AttentionWeights random_weights(int64_t d_model, uint64_t seed);

// Folds the grouped Key rotation + calibrated reorder into W_q/W_k and the
// per-head Value rotation into W_v/W_o, so the stored cache is already in
// quantization-friendly coordinates and only inverse ops run online.
void fuse_weights(AttentionWeights& w, const RotationPlan& key_rotation,
                  const ReorderPlan& reorder, const RotationPlan& value_rotation);

// Runs the Key path of the fused weights over a calibration prompt and
// derives the reordering indices from the rotated Keys.
ReorderPlan calibrate_pipeline_reorder(const Tensor& x_calib, const AttentionWeights& w,
                                       const RotationPlan& key_rotation);

enum class PipelineMode { BaselineFp, RotateKV };

struct SinkOptions {
    bool enabled = false;
    double rel_threshold = 50.0;
    double abs_floor = 0.0;
};

struct PipelineConfig {
    PipelineMode mode = PipelineMode::RotateKV;
    bool quant_enabled = true;
    QuantConfig quant;
    RotationPlan key_rotation;
    RotationPlan value_rotation;  // per-head (g=1) so it commutes with attention
    ReorderPlan reorder;
    RopeConfig rope;
    SinkOptions sinks;
    int64_t num_heads = 0;

    static PipelineConfig make(PipelineMode mode, int64_t num_heads, int64_t head_dim,
                               int64_t heads_per_group, const QuantConfig& quant,
                               bool quant_enabled);
};

struct PrefillResult {
    LayerKVCache cache;
    Tensor output;        // [1, l, d_model]
    Tensor block_output;  // x + output (residual), input to sink detection
};

// Prefill over a [1, l_prompt, d_model] prompt. extra_sinks, when given, are
// the tokens protected by the previous block's massive activations; token 0
// is always retained.
PrefillResult prefill(const Tensor& x, const AttentionWeights& w, const PipelineConfig& cfg,
                      const SinkSet* extra_sinks = nullptr);

// Memo for decode: each cached token's fully reconstructed post-RoPE Key is
// position-fixed, so it is computed once and reused across steps.
struct DecodeMemo {
    std::vector<std::vector<float>> k_post_rope;
    std::vector<std::vector<float>> v_rows;
};

// One decode step; position must equal the current cache length.
Tensor decode_step(const Tensor& t_row, LayerKVCache& cache, const AttentionWeights& w,
                   const PipelineConfig& cfg, int64_t position, DecodeMemo* memo = nullptr);

// ---- Comparison harnesses over synthetic Key workloads ----

enum class ComparisonMode {
    PreRopeRotateReorder,
    PreRopeRotateOnly,
    PostRopeRotateReorder,
    PostRopeRotateOnly,
};

std::string comparison_mode_name(ComparisonMode m);

struct ReportRow {
    std::string mode;
    int bits = 0;
    int64_t group_size = 0;
    int64_t heads_per_group = 0;
    double key_mse = 0.0;
    double attn_mse = 0.0;
    int64_t flops_per_layer = 0;
    double avg_bits = 0.0;
    int64_t sink_count = 0;
};

// CSV with the fixed column set shared by all subcommands.
void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path);
std::string report_csv_header();

// Quantizes the workload Keys under each mode and reports post-RoPE Key
// reconstruction MSE and attention-output MSE against full precision.
std::vector<ReportRow> compare_pipelines(const KVWorkload& w, const std::vector<ComparisonMode>& modes,
                                         const RotationPlan& rotation, const QuantConfig& quant,
                                         const RopeConfig& rope);

// Rotate-then-quantize Key MSE as a function of heads_per_group (isolating
// the grouping effect; no reorder), plus the exact per-layer FWHT cost.
std::vector<ReportRow> grouped_head_sweep(const KVWorkload& w, const std::vector<int64_t>& group_sizes,
                                          const QuantConfig& quant);

}  // namespace rotatekv
