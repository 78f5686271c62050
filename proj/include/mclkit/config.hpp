#pragma once

// Run settings from a flat key=value file ('#' starts a comment) plus command-line overrides.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mclkit/models.hpp"
#include "mclkit/optimize.hpp"

namespace mclkit {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError(key + ": value '" + v + "' is out of range");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw ConfigError("");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

}  // namespace detail

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    for (const auto& s : detail::split_list(text)) seeds.push_back(detail::parse_u64("seed", s));
    if (seeds.empty()) throw ConfigError("seed list is empty");
    return seeds;
}

struct RunSettings {
    TrainConfig train = TrainConfig::desk();
    std::optional<MeasurementConfig> measurement;
    std::size_t width = 8;
    Capacity capacity = Capacity::small;
    double labeled_fraction = 0.2;
    double validation_fraction = 0.1;
    std::size_t k = 5;
    std::vector<std::uint64_t> seeds{0};
    bool explicit_switches = false;

    /// Applies one setting. Unknown keys are errors.
    void set(const std::string& key, const std::string& raw) {
        const std::string v = detail::trim(raw);
        using namespace detail;
        if (key == "schedule") {
            if (v == "paper")
                apply_schedule(TrainConfig::paper());
            else if (v == "desk")
                apply_schedule(TrainConfig::desk());
            else
                throw ConfigError("schedule: expected 'paper' or 'desk', got '" + v + "'");
        } else if (key == "epochs") {
            set_epochs(parse_u64(key, v));
        } else if (key == "lr") {
            train.lr_values.clear();
            for (const auto& s : split_list(v)) train.lr_values.push_back(parse_double(key, s));
        } else if (key == "lr_switch") {
            train.lr_switch.clear();
            if (!v.empty())
                for (const auto& s : split_list(v)) train.lr_switch.push_back(parse_u64(key, s));
            explicit_switches = true;
        } else if (key == "batch_size") {
            train.batch_size = parse_u64(key, v);
        } else if (key == "max_norm") {
            train.max_norm = parse_double(key, v);
        } else if (key == "flip") {
            train.flip = parse_bool(key, v);
        } else if (key == "shift_fraction") {
            train.shift_fraction = parse_double(key, v);
        } else if (key == "lambda") {
            train.lambda = parse_double(key, v);
        } else if (key == "rho") {
            train.rho = parse_double(key, v);
        } else if (key == "epochs_per_round") {
            train.epochs_per_round = parse_u64(key, v);
        } else if (key == "round_cap") {
            train.round_cap = parse_u64(key, v);
        } else if (key == "threads") {
            train.threads = parse_u64(key, v);
        } else if (key == "width") {
            width = parse_u64(key, v);
            if (width == 0) throw ConfigError("width must be positive");
        } else if (key == "capacity") {
            if (v == "small")
                capacity = Capacity::small;
            else if (v == "large")
                capacity = Capacity::large;
            else
                throw ConfigError("capacity: expected 'small' or 'large', got '" + v + "'");
        } else if (key == "measurement") {
            measurement = MeasurementConfig::parse(v);
        } else if (key == "seed") {
            seeds = parse_seed_list(v);
        } else if (key == "labeled_fraction") {
            labeled_fraction = parse_double(key, v);
        } else if (key == "validation_fraction") {
            validation_fraction = parse_double(key, v);
        } else if (key == "k") {
            k = parse_u64(key, v);
        } else {
            throw ConfigError("unknown setting '" + key + "'");
        }
    }

    /// Sets the epoch total. Unless switch epochs were given explicitly they are
    /// rescaled to 1/2 and 3/4 of the total (the ratio of both built-in schedules).
    void set_epochs(std::size_t epochs) {
        if (epochs == 0) throw ConfigError("epochs must be positive");
        train.epochs = epochs;
        if (explicit_switches) return;
        const std::size_t a = epochs / 2, b = epochs * 3 / 4;
        if (a >= 1 && b > a) {
            train.lr_switch = {a, b};
            train.lr_values = {1e-3, 1e-4, 1e-5};
        } else {
            train.lr_switch = {};
            train.lr_values = {1e-3};
        }
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
            try {
                set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
            } catch (const ConfigError& e) {
                throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    void validate() const {
        train.validate();
        if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) throw ConfigError("labeled fraction must lie in (0, 1]");
        if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
            throw ConfigError("validation fraction must lie in (0, 1)");
        if (k == 0) throw ConfigError("k must be positive");
        if (seeds.empty()) throw ConfigError("at least one seed is required");
    }

private:
    void apply_schedule(const TrainConfig& base) {
        train.epochs = base.epochs;
        train.lr_values = base.lr_values;
        train.lr_switch = base.lr_switch;
        explicit_switches = false;
    }
};

}  // namespace mclkit
