#include "abloop/violin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace abloop {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 50.0;

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Silverman's rule, floored so constant samples still draw.
double bandwidth(const std::vector<double>& v, double span) {
    const auto n = static_cast<double>(v.size());
    if (v.size() < 2) return std::max(span * 0.02, 1e-12);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    return std::max(1.06 * sd * std::pow(n, -0.2), std::max(span * 0.02, 1e-12));
}

}  // namespace

std::string violin_svg(const std::string& title, const std::vector<ViolinGroup>& groups, double reference) {
    double lo = reference, hi = reference;
    for (const auto& g : groups)
        for (double v : g.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    double span = hi - lo;
    if (!(span > 0.0)) span = std::max(std::abs(reference), 1.0) * 0.1;
    lo -= 0.1 * span;
    hi += 0.1 * span;
    span = hi - lo;

    const double plot_h = kHeight - kTop - kBottom;
    const double plot_w = kWidth - kLeft - kRight;
    auto y_of = [&](double v) { return kTop + (hi - v) / span * plot_h; };
    const double slot = groups.empty() ? plot_w : plot_w / static_cast<double>(groups.size());

    std::ostringstream svg;
    svg << R"(<?xml version="1.0" encoding="UTF-8"?>)" << '\n'
        << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << kWidth << R"(" height=")" << kHeight
        << R"(" viewBox="0 0 )" << kWidth << ' ' << kHeight << R"(">)" << '\n'
        << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n'
        << R"(<text x=")" << num(kWidth / 2) << R"(" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">)"
        << escape(title) << "</text>\n"
        << R"(<line x1=")" << kLeft << R"(" y1=")" << kTop << R"(" x2=")" << kLeft << R"(" y2=")"
        << kHeight - kBottom << R"(" stroke="black"/>)" << '\n';
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + span * k / 4.0;
        char label[32];
        std::snprintf(label, sizeof label, "%.4g", v);
        svg << R"(<text x=")" << num(kLeft - 6) << R"(" y=")" << num(y_of(v) + 4)
            << R"(" text-anchor="end" font-family="sans-serif" font-size="11">)" << label << "</text>\n";
    }

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        const double cx = kLeft + slot * (static_cast<double>(gi) + 0.5);
        const double half = slot * 0.4;
        svg << R"(<g class="method" id="method-)" << escape(g.label) << R"(">)" << '\n';
        if (!g.values.empty()) {
            const double h = bandwidth(g.values, span);
            constexpr int kSteps = 80;
            std::vector<double> ys(kSteps + 1), dens(kSteps + 1);
            double peak = 0.0;
            for (int s = 0; s <= kSteps; ++s) {
                const double y = lo + span * s / kSteps;
                double d = 0.0;
                for (double v : g.values) d += std::exp(-0.5 * ((y - v) / h) * ((y - v) / h));
                ys[s] = y;
                dens[s] = d;
                peak = std::max(peak, d);
            }
            svg << R"(<path fill="#9ecae1" fill-opacity="0.6" stroke="#3182bd" d="M)";
            for (int s = 0; s <= kSteps; ++s)
                svg << (s ? " L" : "") << num(cx + half * dens[s] / peak) << ',' << num(y_of(ys[s]));
            for (int s = kSteps; s >= 0; --s) svg << " L" << num(cx - half * dens[s] / peak) << ',' << num(y_of(ys[s]));
            svg << R"( Z"/>)" << '\n';
            for (std::size_t i = 0; i < g.values.size(); ++i) {
                // Deterministic jitter from the point index.
                const double jitter = (static_cast<double>((i * 7919) % 101) / 100.0 - 0.5) * half * 0.5;
                svg << R"(<circle cx=")" << num(cx + jitter) << R"(" cy=")" << num(y_of(g.values[i]))
                    << R"(" r="2" fill="#08519c"/>)" << '\n';
            }
        }
        svg << R"(<text x=")" << num(cx) << R"(" y=")" << num(kHeight - kBottom + 20)
            << R"(" text-anchor="middle" font-family="sans-serif" font-size="12">)" << escape(g.label)
            << "</text>\n</g>\n";
    }
    svg << R"(<line class="reference" x1=")" << kLeft << R"(" y1=")" << num(y_of(reference)) << R"(" x2=")"
        << kWidth - kRight << R"(" y2=")" << num(y_of(reference))
        << R"(" stroke="black" stroke-width="1.5" stroke-dasharray="3,3"/>)" << '\n'
        << "</svg>\n";
    return svg.str();
}

}  // namespace abloop
