#pragma once

#include <span>
#include <vector>

namespace itsc::report {

/// Linearly interpolated quantile (q in [0,1]) of an unsorted sample.
double quantile(std::vector<double> values, double q);

/// P(positive > negative) + ½ P(tie), by exhaustive pair counting.
double auroc(std::span<const double> negatives, std::span<const double> positives);

}  // namespace itsc::report
