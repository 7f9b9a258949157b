#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace smile {

/// Dense row-major cost matrix for a balanced transportation problem.
struct TransportProblem {
    std::vector<double> supply;
    std::vector<double> demand;
    std::vector<double> cost;  // supply.size() x demand.size()

    double cost_at(std::size_t i, std::size_t j) const { return cost[i * demand.size() + j]; }
};

struct TransportSolution {
    double cost = 0.0;
    std::vector<double> plan;  // same layout as TransportProblem::cost
    int pivots = 0;
};

/// Exact transportation simplex (north-west corner start, MODI pricing).
///
/// Supplies and demands must be nonnegative with equal totals (up to 1e-9
/// relative); the last demand absorbs rounding. Degenerate bases are kept
/// explicitly as zero-flow basic cells; after a pivot budget the entering rule
/// switches to Bland's rule.
TransportSolution solve_transport(const TransportProblem& problem);

}  // namespace smile
