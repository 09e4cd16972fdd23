#pragma once

// Forecast-quality metrics: RMSE, MAE, MAPE (percent), and the Theil
// inequality coefficient, computed per forecasting horizon on denormalized
// values.

#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "deepcast/data.hpp"
#include "deepcast/errors.hpp"
#include "deepcast/model.hpp"

namespace deepcast {

// MAPE requires every actual to be nonzero and TIC a positive denominator;
// when undefined they are absent rather than fabricated.
struct Metrics {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> mape;
    std::optional<double> tic;
};

inline constexpr double kMapeZeroGuard = 1e-12;

inline Metrics compute_metrics(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size()) {
        throw ShapeError("metrics: series lengths differ: " + std::to_string(actual.size()) +
                         " vs " + std::to_string(predicted.size()));
    }
    if (actual.empty()) throw Error("metrics: need at least one observation");
    const double n = static_cast<double>(actual.size());
    double sq = 0.0, abs_sum = 0.0, pct_sum = 0.0, a2 = 0.0, p2 = 0.0;
    bool mape_ok = true;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double err = actual[i] - predicted[i];
        sq += err * err;
        abs_sum += std::abs(err);
        a2 += actual[i] * actual[i];
        p2 += predicted[i] * predicted[i];
        if (std::abs(actual[i]) > kMapeZeroGuard) {
            pct_sum += std::abs(err / actual[i]);
        } else {
            mape_ok = false;
        }
    }
    Metrics m;
    m.rmse = std::sqrt(sq / n);
    m.mae = abs_sum / n;
    if (mape_ok) m.mape = 100.0 / n * pct_sum;
    const double denom = std::sqrt(a2 / n) + std::sqrt(p2 / n);
    if (denom > 0.0) m.tic = m.rmse / denom;
    return m;
}

struct HorizonMetrics {
    std::size_t horizon = 0;  // 1-based step ahead
    Metrics metrics;
    std::size_t n = 0;  // evaluation count
};

struct MetricsReport {
    std::vector<HorizonMetrics> rows;
};

// Forwards every test sequence, denormalizes predictions and labels, and
// scores each horizon column separately.
inline MetricsReport evaluate_model(const ArchSpec& spec, const ParameterSet& params,
                                    const std::vector<WindowPair>& test_pairs,
                                    const NormParams& norm) {
    if (test_pairs.empty()) throw DataError("evaluation: no test pairs");
    const std::size_t H = spec.horizon;
    std::vector<std::vector<double>> actual(H), predicted(H);
    for (const WindowPair& pair : test_pairs) {
        const Tensor input({spec.window, 1}, pair.sequence.raw());
        const Tensor pred = model_forward(spec, params, input);
        for (std::size_t h = 0; h < H; ++h) {
            actual[h].push_back(denormalize(pair.label[h], norm));
            predicted[h].push_back(denormalize(pred[h], norm));
        }
    }
    MetricsReport report;
    for (std::size_t h = 0; h < H; ++h) {
        report.rows.push_back(
            {h + 1, compute_metrics(actual[h], predicted[h]), test_pairs.size()});
    }
    return report;
}

namespace detail {

inline std::string metric_str(const std::optional<double>& v) {
    return v ? fmt_g17(*v) : "nan";
}

}  // namespace detail

inline std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "horizon,rmse,mae,mape,tic\n";
    for (const HorizonMetrics& row : report.rows) {
        out << row.horizon << "," << detail::fmt_g17(row.metrics.rmse) << ","
            << detail::fmt_g17(row.metrics.mae) << "," << detail::metric_str(row.metrics.mape)
            << "," << detail::metric_str(row.metrics.tic) << "\n";
    }
    return out.str();
}

inline MetricsReport report_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "horizon,rmse,mae,mape,tic") {
        throw DataError("report: missing header line");
    }
    MetricsReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() != 5) throw DataError("report: bad row: " + line);
        HorizonMetrics row;
        row.horizon = static_cast<std::size_t>(std::strtoull(fields[0].c_str(), nullptr, 10));
        row.metrics.rmse = std::strtod(fields[1].c_str(), nullptr);
        row.metrics.mae = std::strtod(fields[2].c_str(), nullptr);
        const double mape = std::strtod(fields[3].c_str(), nullptr);
        if (!std::isnan(mape)) row.metrics.mape = mape;
        const double tic = std::strtod(fields[4].c_str(), nullptr);
        if (!std::isnan(tic)) row.metrics.tic = tic;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace deepcast
