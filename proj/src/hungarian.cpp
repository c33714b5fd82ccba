#include "pairnet/hungarian.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pairnet {

// Shortest augmenting path with row/column potentials, O(rows^2 * cols).
std::vector<std::size_t> hungarian(const Tensor& cost) {
  if (cost.rank() != 2) {
    throw std::invalid_argument("hungarian: cost must be a matrix, got " +
                                shape_string(cost.shape()));
  }
  const std::size_t n = cost.dim(0), m = cost.dim(1);
  if (n > m) {
    throw std::invalid_argument("hungarian: " + std::to_string(n) + " rows exceed " +
                                std::to_string(m) + " columns");
  }
  if (!cost.all_finite()) throw std::invalid_argument("hungarian: non-finite cost");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based; index 0 is a virtual column/row.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> row_of_col(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = row_of_col[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[row_of_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of_row(n);
  for (std::size_t j = 1; j <= m; ++j) {
    if (row_of_col[j] != 0) col_of_row[row_of_col[j] - 1] = j - 1;
  }
  return col_of_row;
}

double assignment_cost(const Tensor& cost, const std::vector<std::size_t>& assignment) {
  double s = 0.0;
  for (std::size_t r = 0; r < assignment.size(); ++r) s += cost.at(r, assignment[r]);
  return s;
}

}  // namespace pairnet
