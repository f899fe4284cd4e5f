#include "segbench/hungarian.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "segbench/error.hpp"

namespace segbench {

// Shortest augmenting path (Jonker-Volgenant style potentials), O(T^2 Q).
// Rows of the working problem are targets, columns are predictions.
std::vector<int> hungarian_match(const std::vector<double>& cost, int num_preds, int num_targets) {
  if (num_targets > num_preds) {
    throw Error("hungarian_match: " + std::to_string(num_targets) + " targets exceed " +
                std::to_string(num_preds) + " predictions");
  }
  if (cost.size() != static_cast<std::size_t>(num_preds) * num_targets) {
    throw Error("hungarian_match: cost matrix size does not match [Q, T]");
  }
  for (double c : cost) {
    if (!std::isfinite(c)) throw Error("hungarian_match: non-finite cost");
  }
  if (num_targets == 0) return {};

  const int n = num_targets;
  const int m = num_preds;
  const double inf = std::numeric_limits<double>::infinity();
  auto a = [&](int row, int col) { return cost[static_cast<std::size_t>(col) * n + row]; };

  // 1-based arrays; index 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(m + 1, 0.0);
  std::vector<int> owner(m + 1, 0);
  std::vector<int> way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    owner[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = owner[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> match(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (owner[j] != 0) match[owner[j] - 1] = j - 1;
  }
  return match;
}

}  // namespace segbench
