#pragma once

#include <cstddef>
#include <vector>

#include "pairnet/tensor.hpp"

namespace pairnet {

// Minimum-cost injective assignment of the rows of a [rows, cols] cost matrix
// (rows <= cols) to distinct columns. Returns the column of each row.
// Throws std::invalid_argument if rows > cols or any cost is non-finite.
std::vector<std::size_t> hungarian(const Tensor& cost);

// Sum of cost[r, assignment[r]] accumulated in row order.
double assignment_cost(const Tensor& cost, const std::vector<std::size_t>& assignment);

}  // namespace pairnet
