#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace abloop {

/// One logged user: what was shown under which arm and what happened.
/// Prediction columns come from the model that served the user.
struct Interaction {
    std::int32_t period = 0;  // 1-based experiment period
    std::int32_t user_index = 0;
    std::uint8_t z = 0;
    std::uint8_t is_short = 0;
    std::uint8_t finished = 0;
    double stay_duration = 0.0;
    double fr_hat = 0.0;
    double sd_hat = 0.0;
    // NaN when the period's update did not use the weighting network.
    double g_out = std::numeric_limits<double>::quiet_NaN();
    double w_treatment = std::numeric_limits<double>::quiet_NaN();
    double w_control = std::numeric_limits<double>::quiet_NaN();

    bool has_weights() const noexcept { return !std::isnan(g_out); }
};

enum class Metric { kShortProportion, kStayDuration, kFinishingRate };

inline constexpr std::array<Metric, 3> kAllMetrics = {Metric::kShortProportion, Metric::kStayDuration,
                                                      Metric::kFinishingRate};

constexpr std::string_view metric_name(Metric m) noexcept {
    switch (m) {
        case Metric::kShortProportion: return "short_proportion";
        case Metric::kStayDuration: return "stay_duration";
        case Metric::kFinishingRate: return "finishing_rate";
    }
    return "?";
}

constexpr double metric_value(const Interaction& row, Metric m) noexcept {
    switch (m) {
        case Metric::kShortProportion: return row.is_short;
        case Metric::kStayDuration: return row.stay_duration;
        case Metric::kFinishingRate: return row.finished;
    }
    return 0.0;
}

}  // namespace abloop
