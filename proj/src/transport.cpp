#include "smile/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "smile/error.hpp"

namespace smile {

namespace {

struct Basis {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<char> basic;  // rows x cols
    std::vector<double> flow;

    std::size_t at(std::size_t i, std::size_t j) const { return i * cols + j; }
};

// Nodes 0..rows-1 are sources, rows..rows+cols-1 are sinks. Returns the tree
// path from `from` to `to` as a list of cells, or empty when disconnected.
std::vector<std::size_t> tree_path(const Basis& b, std::size_t from, std::size_t to) {
    const std::size_t n_nodes = b.rows + b.cols;
    std::vector<std::size_t> parent(n_nodes, n_nodes);
    std::vector<std::size_t> via_cell(n_nodes, 0);
    std::vector<std::size_t> queue{from};
    parent[from] = from;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t node = queue[head];
        if (node == to) break;
        if (node < b.rows) {
            for (std::size_t j = 0; j < b.cols; ++j) {
                const std::size_t next = b.rows + j;
                if (b.basic[b.at(node, j)] && parent[next] == n_nodes) {
                    parent[next] = node;
                    via_cell[next] = b.at(node, j);
                    queue.push_back(next);
                }
            }
        } else {
            const std::size_t j = node - b.rows;
            for (std::size_t i = 0; i < b.rows; ++i) {
                if (b.basic[b.at(i, j)] && parent[i] == n_nodes) {
                    parent[i] = node;
                    via_cell[i] = b.at(i, j);
                    queue.push_back(i);
                }
            }
        }
    }
    std::vector<std::size_t> cells;
    if (parent[to] == n_nodes) return cells;
    for (std::size_t node = to; node != from; node = parent[node]) cells.push_back(via_cell[node]);
    std::reverse(cells.begin(), cells.end());
    return cells;
}

void potentials(const Basis& b, const TransportProblem& p, std::vector<double>& u, std::vector<double>& v) {
    constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
    u.assign(b.rows, kUnset);
    v.assign(b.cols, kUnset);
    u[0] = 0.0;
    std::vector<std::size_t> queue{0};
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t node = queue[head];
        if (node < b.rows) {
            for (std::size_t j = 0; j < b.cols; ++j) {
                if (b.basic[b.at(node, j)] && std::isnan(v[j])) {
                    v[j] = p.cost_at(node, j) - u[node];
                    queue.push_back(b.rows + j);
                }
            }
        } else {
            const std::size_t j = node - b.rows;
            for (std::size_t i = 0; i < b.rows; ++i) {
                if (b.basic[b.at(i, j)] && std::isnan(u[i])) {
                    u[i] = p.cost_at(i, j) - v[j];
                    queue.push_back(i);
                }
            }
        }
    }
}

}  // namespace

TransportSolution solve_transport(const TransportProblem& problem) {
    const std::size_t m = problem.supply.size();
    const std::size_t n = problem.demand.size();
    if (m == 0 || n == 0) throw Error(ErrorCode::kInvalidArgument, "transport problem has no sources or sinks");
    if (problem.cost.size() != m * n) throw Error(ErrorCode::kLengthMismatch, "cost matrix shape");
    for (double s : problem.supply)
        if (!(s >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative supply");
    for (double d : problem.demand)
        if (!(d >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative demand");
    const double total_supply = std::accumulate(problem.supply.begin(), problem.supply.end(), 0.0);
    const double total_demand = std::accumulate(problem.demand.begin(), problem.demand.end(), 0.0);
    if (std::abs(total_supply - total_demand) > 1e-9 * std::max(1.0, total_supply)) {
        throw Error(ErrorCode::kInvalidArgument, "unbalanced transport problem");
    }

    Basis b;
    b.rows = m;
    b.cols = n;
    b.basic.assign(m * n, 0);
    b.flow.assign(m * n, 0.0);

    // North-west corner: exactly m + n - 1 basic cells, zero-flow cells included.
    {
        std::vector<double> a = problem.supply;
        std::vector<double> d = problem.demand;
        d.back() += total_supply - total_demand;
        std::size_t i = 0, j = 0;
        const double tie = 1e-15 * std::max(1.0, total_supply);
        while (true) {
            const double q = std::max(0.0, std::min(a[i], d[j]));
            b.basic[b.at(i, j)] = 1;
            b.flow[b.at(i, j)] = q;
            a[i] -= q;
            d[j] -= q;
            if (i == m - 1 && j == n - 1) break;
            if (i == m - 1) {
                ++j;
            } else if (j == n - 1) {
                ++i;
            } else if (a[i] <= tie) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    const double scale = std::max(1.0, *std::max_element(problem.cost.begin(), problem.cost.end(),
                                                          [](double x, double y) { return std::abs(x) < std::abs(y); }));
    const double tol = 1e-12 * scale;
    const int bland_after = static_cast<int>(50 * (m + n) + 100);
    const int max_pivots = bland_after + static_cast<int>(200 * m * n + 1000);

    TransportSolution sol;
    std::vector<double> u, v;
    for (;;) {
        potentials(b, problem, u, v);

        std::size_t enter = m * n;
        double best = -tol;
        const bool bland = sol.pivots >= bland_after;
        for (std::size_t i = 0; i < m && !(bland && enter < m * n); ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t c = b.at(i, j);
                if (b.basic[c]) continue;
                const double reduced = problem.cost[c] - u[i] - v[j];
                if (reduced < best) {
                    best = reduced;
                    enter = c;
                    if (bland) break;
                }
            }
        }
        if (enter == m * n) break;
        if (sol.pivots >= max_pivots) {
            throw Error(ErrorCode::kInvalidArgument, "transport simplex failed to converge");
        }

        const std::size_t ei = enter / n;
        const std::size_t ej = enter % n;
        // Cycle = entering cell + tree path from source ei to sink ej. Cells on
        // the path alternate -theta, +theta starting with -theta.
        const std::vector<std::size_t> path = tree_path(b, ei, m + ej);
        if (path.empty()) throw Error(ErrorCode::kInvalidArgument, "transport basis is not spanning");

        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = m * n;
        for (std::size_t k = 0; k < path.size(); k += 2) {
            const double f = b.flow[path[k]];
            if (f < theta || (f == theta && path[k] < leave)) {
                theta = f;
                leave = path[k];
            }
        }
        for (std::size_t k = 0; k < path.size(); ++k) {
            double& f = b.flow[path[k]];
            f += (k % 2 == 0) ? -theta : theta;
            if (f < 0.0) f = 0.0;
        }
        b.basic[enter] = 1;
        b.flow[enter] = theta;
        b.basic[leave] = 0;
        b.flow[leave] = 0.0;
        ++sol.pivots;
    }

    sol.plan = b.flow;
    for (std::size_t c = 0; c < m * n; ++c) sol.cost += b.flow[c] * problem.cost[c];
    return sol;
}

}  // namespace smile
