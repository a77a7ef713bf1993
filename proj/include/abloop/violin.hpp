#pragma once

#include <string>
#include <vector>

namespace abloop {

struct ViolinGroup {
    std::string label;
    std::vector<double> values;
};

/// Self-contained SVG: one Gaussian-KDE violin with jittered points per
/// group, and a dotted horizontal line at `reference`.
std::string violin_svg(const std::string& title, const std::vector<ViolinGroup>& groups, double reference);

}  // namespace abloop
