#include "rotatekv/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rotatekv {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
    throw std::runtime_error("config parse error at line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t z = s.find_last_not_of(" \t\r");
    return s.substr(a, z - a + 1);
}

int64_t to_int(const std::string& v, int line) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) fail(line, "invalid integer '" + v + "'");
        return r;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "invalid integer '" + v + "'");
    }
}

double to_real(const std::string& v, int line) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) fail(line, "invalid number '" + v + "'");
        return r;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "invalid number '" + v + "'");
    }
}

bool to_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(line, "invalid boolean '" + v + "'");
}

}  // namespace

void ExperimentConfig::require_section(const std::string& name) const {
    if (!sections_seen.count(name))
        throw std::runtime_error("config error: missing required section [" + name + "]");
}

ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) fail(line, "empty section name");
            cfg.sections_seen.insert(section);
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected key=value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (key.empty()) fail(line, "empty key");
        if (section.empty()) fail(line, "key '" + key + "' outside any section");

        if (section == "workload") {
            if (key == "b") cfg.workload.b = to_int(val, line);
            else if (key == "h") cfg.workload.h = to_int(val, line);
            else if (key == "s") cfg.workload.s = to_int(val, line);
            else if (key == "d") cfg.workload.d = to_int(val, line);
            else if (key == "d_model") cfg.workload.d_model = to_int(val, line);
            else if (key == "outlier_channels_per_head")
                cfg.workload.outlier_channels_per_head = to_int(val, line);
            else if (key == "outlier_gain") cfg.workload.outlier_gain = to_real(val, line);
            else if (key == "per_head_distinct") cfg.workload.per_head_distinct = to_bool(val, line);
            else if (key == "seed") cfg.workload.seed = static_cast<uint64_t>(to_int(val, line));
            else if (key == "spike") {
                // token,channel,magnitude — repeatable.
                std::istringstream vs(val);
                MassiveSpike m{};
                char c1 = 0, c2 = 0;
                if (!(vs >> m.token >> c1 >> m.channel >> c2 >> m.magnitude) || c1 != ',' || c2 != ',')
                    fail(line, "spike expects token,channel,magnitude");
                cfg.workload.massive_tokens.push_back(m);
            } else fail(line, "unknown key '" + key + "' in [workload]");
        } else if (section == "quant") {
            if (key == "bits") cfg.quant.bits = static_cast<int>(to_int(val, line));
            else if (key == "group_size") cfg.quant.group_size = to_int(val, line);
            else if (key == "clip_lo") cfg.quant.clip_lo = to_real(val, line);
            else if (key == "clip_hi") cfg.quant.clip_hi = to_real(val, line);
            else fail(line, "unknown key '" + key + "' in [quant]");
        } else if (section == "rotation") {
            if (key == "heads_per_group") cfg.heads_per_group = to_int(val, line);
            else fail(line, "unknown key '" + key + "' in [rotation]");
        } else if (section == "rope") {
            if (key == "base") cfg.rope.base = to_real(val, line);
            else if (key == "head_dim") cfg.rope.head_dim = to_int(val, line);
            else fail(line, "unknown key '" + key + "' in [rope]");
        } else if (section == "sinks") {
            if (key == "rel_threshold") cfg.sink_rel_threshold = to_real(val, line);
            else if (key == "abs_floor") cfg.sink_abs_floor = to_real(val, line);
            else fail(line, "unknown key '" + key + "' in [sinks]");
        } else if (section == "output") {
            if (key == "path") cfg.out_path = val;
            else fail(line, "unknown key '" + key + "' in [output]");
        } else {
            fail(line, "unknown section [" + section + "]");
        }
    }
    if (cfg.rope.head_dim == 0) cfg.rope.head_dim = cfg.workload.d;
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_string(buf.str());
}

}  // namespace rotatekv
