#pragma once

#include <adjcheck/graph.hpp>
#include <adjcheck/simulation.hpp>

#include <charconv>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace adjcheck {

/// section -> key -> value. Keys before any `[section]` land in "".
using IniDocument = std::map<std::string, std::map<std::string, std::string>>;

inline IniDocument parse_ini(std::string_view text) {
    IniDocument doc;
    std::string section;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        const auto eol = std::min(text.find('\n', pos), text.size());
        std::string_view line = detail::trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": bad section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(detail::trim(line.substr(0, eq)));
        std::string_view value = detail::trim(line.substr(eq + 1));
        if (const auto hash = value.find(" #"); hash != std::string_view::npos) value = detail::trim(value.substr(0, hash));
        if (key.empty()) throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": empty key");
        doc[section][key] = std::string(value);
    }
    return doc;
}

namespace detail {

inline std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        const auto comma = std::min(value.find(',', start), value.size());
        const auto item = trim(value.substr(start, comma - start));
        if (!item.empty()) out.emplace_back(item);
        start = comma + 1;
    }
    return out;
}

inline std::uint64_t parse_count(const std::string& key, std::string_view value) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size())
        throw Error(ErrorCode::ConfigError, key + ": expected a non-negative integer, got '" + std::string(value) + "'");
    return out;
}

inline std::vector<std::size_t> parse_counts(const std::string& key, std::string_view value) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(value)) out.push_back(static_cast<std::size_t>(parse_count(key, item)));
    return out;
}

inline bool parse_bool(const std::string& key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw Error(ErrorCode::ConfigError, key + ": expected true or false");
}

}  // namespace detail

/// Reads the `[simulation]` section of an INI document. Unknown keys are
/// rejected so typos do not silently fall back to defaults.
inline SimConfig parse_sim_config(std::string_view text) {
    const IniDocument doc = parse_ini(text);
    SimConfig cfg;
    const auto it = doc.find("simulation");
    if (it == doc.end()) throw Error(ErrorCode::ConfigError, "missing [simulation] section");
    for (const auto& [key, value] : it->second) {
        if (key == "graph_sizes") cfg.graph_sizes = detail::parse_counts(key, value);
        else if (key == "neighborhood_sizes") cfg.neighborhood_sizes = detail::parse_counts(key, value);
        else if (key == "n_models") cfg.n_models = detail::parse_count(key, value);
        else if (key == "n_candidates_per_model") cfg.n_candidates_per_model = detail::parse_count(key, value);
        else if (key == "test_sample_sizes") cfg.test_sample_sizes = detail::parse_counts(key, value);
        else if (key == "replications") cfg.replications_per_cell = detail::parse_count(key, value);
        else if (key == "base_seed") cfg.base_seed = detail::parse_count(key, value);
        else if (key == "discard_rank1") cfg.discard_rank1 = detail::parse_bool(key, value);
        else if (key == "cap") cfg.cap = detail::parse_count(key, value);
        else if (key == "low_accuracy_edits") cfg.low_accuracy_edits = detail::parse_count(key, value);
        else if (key == "high_accuracy_edits") cfg.high_accuracy_edits = detail::parse_count(key, value);
        else if (key == "accuracies") cfg.accuracies = detail::split_list(value);
        else if (key == "strategies") {
            cfg.strategies.clear();
            for (const auto& s : detail::split_list(value)) {
                if (s != "all" && s != "minplus")
                    throw Error(ErrorCode::ConfigError, "strategies: unknown strategy '" + s + "'");
                cfg.strategies.push_back(parse_strategy(s));
            }
        } else {
            throw Error(ErrorCode::ConfigError, "unknown key '" + key + "' in [simulation]");
        }
    }
    cfg.validate();
    return cfg;
}

inline SimConfig load_sim_config(const std::string& path) { return parse_sim_config(detail::read_file(path)); }

}  // namespace adjcheck
