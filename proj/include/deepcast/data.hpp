#pragma once

// Data pipeline: CSV ingestion, chronological 8:1:1 split, min-max
// normalization fitted on the training segment only, sliding-window pair
// construction, and synthetic fixture series.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "deepcast/errors.hpp"
#include "deepcast/prng.hpp"
#include "deepcast/tensor.hpp"

namespace deepcast {

struct PriceSeries {
    std::vector<std::string> dates;  // strictly increasing (ISO dates sort lexicographically)
    std::vector<double> values;      // positive close prices

    std::size_t size() const { return values.size(); }
};

struct NormParams {
    double min = 0.0;
    double max = 1.0;

    void validate() const {
        if (!(max > min)) {
            throw DataError("normalization: max (" + std::to_string(max) +
                            ") must exceed min (" + std::to_string(min) + ")");
        }
    }
    double range() const { return max - min; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

}  // namespace detail

// Comma-separated text, first line a header containing "Date" and the chosen
// value column. Rows must parse in order with strictly increasing dates and
// positive values; any bad row aborts with its 1-based row number (the header
// is row 1).
inline PriceSeries load_csv(const std::string& path, const std::string& column = "Close") {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    const std::vector<std::string> header = detail::split_csv_line(line);
    std::size_t date_col = header.size(), value_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name = detail::trim(header[i]);
        if (name == "Date") date_col = i;
        if (name == column) value_col = i;
    }
    if (date_col == header.size()) throw DataError(path + ": missing column 'Date' in header");
    if (value_col == header.size()) {
        throw DataError(path + ": missing column '" + column + "' in header");
    }
    PriceSeries series;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() <= std::max(date_col, value_col)) {
            throw DataError(path + ": row " + std::to_string(row) + ": too few fields");
        }
        const std::string date = detail::trim(fields[date_col]);
        if (date.empty()) {
            throw DataError(path + ": row " + std::to_string(row) + ": empty date");
        }
        double value = 0.0;
        if (!detail::parse_double(fields[value_col], value)) {
            throw DataError(path + ": row " + std::to_string(row) +
                            ": empty or unparsable value in column '" + column + "'");
        }
        if (!(value > 0.0)) {
            throw DataError(path + ": row " + std::to_string(row) +
                            ": non-positive price in column '" + column + "'");
        }
        if (!series.dates.empty() && !(series.dates.back() < date)) {
            throw DataError(path + ": row " + std::to_string(row) +
                            ": dates not strictly increasing");
        }
        series.dates.push_back(date);
        series.values.push_back(value);
    }
    if (series.values.empty()) throw DataError(path + ": no data rows");
    return series;
}

inline void save_csv(const std::string& path, const PriceSeries& series,
                     const std::string& column = "Close") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << "Date," << column << "\n";
    char buf[40];
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", series.values[i]);
        out << series.dates[i] << "," << buf << "\n";
    }
}

struct SplitSpec {
    std::optional<std::size_t> train_len;  // overrides floor(0.8 * L)
    std::optional<std::size_t> val_len;    // overrides floor(0.1 * L)
};

struct SplitSegments {
    std::vector<double> train, val, test;
};

// Chronological, non-overlapping 8:1:1 split: train = floor(0.8 L),
// validation = floor(0.1 L), test = remainder, unless explicit lengths
// override the floor rule.
inline SplitSegments split_811(const std::vector<double>& values, const SplitSpec& spec = {}) {
    const std::size_t L = values.size();
    if (L < 10) {
        throw DataError("series too short to split 8:1:1: " + std::to_string(L) +
                        " points (need >= 10)");
    }
    const std::size_t train_len = spec.train_len.value_or(L * 8 / 10);
    const std::size_t val_len = spec.val_len.value_or(L / 10);
    if (train_len < 1 || val_len < 1 || train_len + val_len >= L) {
        throw DataError("invalid split lengths: train " + std::to_string(train_len) + ", val " +
                        std::to_string(val_len) + " of " + std::to_string(L));
    }
    SplitSegments out;
    out.train.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(train_len));
    out.val.assign(values.begin() + static_cast<std::ptrdiff_t>(train_len),
                   values.begin() + static_cast<std::ptrdiff_t>(train_len + val_len));
    out.test.assign(values.begin() + static_cast<std::ptrdiff_t>(train_len + val_len),
                    values.end());
    return out;
}

inline NormParams fit_norm(const std::vector<double>& train) {
    if (train.empty()) throw DataError("normalization: empty training segment");
    NormParams norm{train[0], train[0]};
    for (double v : train) {
        norm.min = std::min(norm.min, v);
        norm.max = std::max(norm.max, v);
    }
    norm.validate();
    return norm;
}

// (y - min) / (max - min). The training segment maps into [0, 1]; validation
// and test values may leave that interval.
inline std::vector<double> normalize(const std::vector<double>& values, const NormParams& norm) {
    norm.validate();
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - norm.min) / norm.range();
    return out;
}

inline double denormalize(double v, const NormParams& norm) {
    norm.validate();
    return v * norm.range() + norm.min;
}

inline std::vector<double> denormalize(const std::vector<double>& values, const NormParams& norm) {
    norm.validate();
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * norm.range() + norm.min;
    return out;
}

struct WindowPair {
    Tensor sequence;  // [d]
    Tensor label;     // [H]
};

// Pair k: sequence = values[k .. k+d-1], label = values[k+d .. k+d+H-1];
// the window shifts one step at a time, giving L - d - H + 1 pairs.
inline std::vector<WindowPair> make_windows(const std::vector<double>& segment, std::size_t d,
                                            std::size_t horizon) {
    if (d < 1 || horizon < 1) throw DataError("windows: d and horizon must be >= 1");
    if (segment.size() < d + horizon) {
        throw DataError("windows: segment of " + std::to_string(segment.size()) +
                        " points cannot fit window " + std::to_string(d) + " + horizon " +
                        std::to_string(horizon));
    }
    const std::size_t count = segment.size() - d - horizon + 1;
    std::vector<WindowPair> pairs;
    pairs.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<double> seq(segment.begin() + static_cast<std::ptrdiff_t>(k),
                                segment.begin() + static_cast<std::ptrdiff_t>(k + d));
        std::vector<double> label(segment.begin() + static_cast<std::ptrdiff_t>(k + d),
                                  segment.begin() + static_cast<std::ptrdiff_t>(k + d + horizon));
        pairs.push_back(WindowPair{Tensor({d}, std::move(seq)), Tensor({horizon}, std::move(label))});
    }
    return pairs;
}

struct WindowedDataset {
    std::size_t window = 0;
    std::size_t horizon = 0;
    std::vector<WindowPair> train, val, test;
    NormParams norm;
};

// Split raw values, fit normalization on the training segment only, then
// window each normalized segment independently (windows never span split
// boundaries). Validation/test segments too short for a single window yield
// empty pair lists; an unwindowable training segment is an error.
inline WindowedDataset make_dataset(const PriceSeries& series, std::size_t d, std::size_t horizon,
                                    const SplitSpec& split = {}) {
    const SplitSegments segments = split_811(series.values, split);
    WindowedDataset ds;
    ds.window = d;
    ds.horizon = horizon;
    ds.norm = fit_norm(segments.train);
    ds.train = make_windows(normalize(segments.train, ds.norm), d, horizon);
    if (segments.val.size() >= d + horizon) {
        ds.val = make_windows(normalize(segments.val, ds.norm), d, horizon);
    }
    if (segments.test.size() >= d + horizon) {
        ds.test = make_windows(normalize(segments.test, ds.norm), d, horizon);
    }
    return ds;
}

enum class SynthKind { sine, noisy_sine, random_walk };

// Fixture-series constants.
inline constexpr double kSineOffset = 100.0;
inline constexpr double kSineAmplitude = 10.0;
inline constexpr double kSinePeriod = 40.0;
inline constexpr double kNoiseAmplitude = 1.0;
inline constexpr double kWalkStart = 500.0;
inline constexpr double kWalkStepBound = 1.0;  // steps uniform in [-1, 1]

// Deterministic synthetic series; identical seeds give identical series.
// Dates are fixed-width counters and therefore strictly increasing.
inline PriceSeries synth_series(SynthKind kind, std::size_t length, Prng& prng) {
    if (length < 1) throw DataError("synthetic series: length must be >= 1");
    PriceSeries series;
    series.dates.reserve(length);
    series.values.reserve(length);
    const double two_pi = 6.283185307179586476925286766559;
    double walk = kWalkStart;
    char buf[24];
    for (std::size_t k = 0; k < length; ++k) {
        double v = 0.0;
        switch (kind) {
            case SynthKind::sine:
                v = kSineOffset +
                    kSineAmplitude * std::sin(two_pi * static_cast<double>(k) / kSinePeriod);
                break;
            case SynthKind::noisy_sine:
                v = kSineOffset +
                    kSineAmplitude * std::sin(two_pi * static_cast<double>(k) / kSinePeriod) +
                    kNoiseAmplitude * prng.uniform(-1.0, 1.0);
                break;
            case SynthKind::random_walk:
                v = walk;
                walk += prng.uniform(-kWalkStepBound, kWalkStepBound);
                break;
        }
        std::snprintf(buf, sizeof(buf), "t%012llu", static_cast<unsigned long long>(k));
        series.dates.emplace_back(buf);
        series.values.push_back(v);
    }
    return series;
}

}  // namespace deepcast
