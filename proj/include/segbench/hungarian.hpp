#pragma once

#include <vector>

namespace segbench {

/// Minimum-cost assignment of T targets to distinct predictions out of Q >= T.
/// `cost` is row-major [Q, T]. Returns, for each target t, the matched prediction index.
std::vector<int> hungarian_match(const std::vector<double>& cost, int num_preds, int num_targets);

}  // namespace segbench
