#pragma once

#include <set>
#include <string>

#include "rotatekv/quant.hpp"
#include "rotatekv/rope.hpp"
#include "rotatekv/workload.hpp"

namespace rotatekv {

// Line-oriented `[section]` / `key=value` experiment description. Unknown
// keys are rejected with the offending line number; sections are optional
// (defaults apply) but subcommands can insist on one via require_section.
struct ExperimentConfig {
    WorkloadSpec workload;
    QuantConfig quant;
    int64_t heads_per_group = 1;
    RopeConfig rope;
    double sink_rel_threshold = 50.0;
    double sink_abs_floor = 0.0;
    std::string out_path;

    std::set<std::string> sections_seen;

    void require_section(const std::string& name) const;

    static ExperimentConfig parse_string(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);
};

}  // namespace rotatekv
