// Slow, independent reference implementations used by the tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

// Solves A x = b (n x n, row-major) by Gaussian elimination with partial
// pivoting in long double. Empty result when a pivot falls below `tiny`.
inline std::optional<std::vector<long double>> solve_dense(std::vector<long double> a, std::vector<long double> b,
                                                           std::size_t n, long double tiny = 1e-15L) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
        if (std::fabs(a[piv * n + col]) < tiny) return std::nullopt;
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const long double f = a[r * n + col] / a[col * n + col];
            if (f == 0.0L) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<long double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        long double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
        x[i] = s / a[i * n + i];
    }
    return x;
}

// Minimum transportation cost by enumerating every basis of m + n - 1 cells,
// i.e. every vertex of the transportation polytope. Only for tiny instances.
inline long double transport_vertex_enumeration(const std::vector<double>& supply, const std::vector<double>& demand,
                                                const std::vector<double>& cost) {
    const std::size_t m = supply.size(), n = demand.size(), cells = m * n, k = m + n - 1;
    long double best = std::numeric_limits<long double>::infinity();
    std::vector<std::size_t> pick(k);
    for (std::size_t i = 0; i < k; ++i) pick[i] = i;
    while (true) {
        // Constraint rows: m supplies, then the first n - 1 demands.
        std::vector<long double> a(k * k, 0.0L), b(k);
        for (std::size_t v = 0; v < k; ++v) {
            const std::size_t i = pick[v] / n, j = pick[v] % n;
            a[i * k + v] = 1.0L;
            if (j + 1 < n) a[(m + j) * k + v] = 1.0L;
        }
        for (std::size_t i = 0; i < m; ++i) b[i] = supply[i];
        for (std::size_t j = 0; j + 1 < n; ++j) b[m + j] = demand[j];
        if (auto x = solve_dense(a, b, k, 1e-12L)) {
            bool feasible = true;
            long double c = 0.0L;
            for (std::size_t v = 0; v < k; ++v) {
                if ((*x)[v] < -1e-12L) feasible = false;
                c += (*x)[v] * static_cast<long double>(cost[pick[v]]);
            }
            if (feasible) best = std::min(best, c);
        }
        // next combination
        std::size_t i = k;
        while (i > 0 && pick[i - 1] == cells - k + i - 1) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
    return best;
}

// Weighted least squares with intercept through the dense normal equations.
// Returns {intercept, beta_1..beta_t}; empty when X^T W X is singular.
inline std::optional<std::vector<long double>> wls_normal_equations(const std::vector<std::vector<std::uint8_t>>& x,
                                                                    const std::vector<double>& y,
                                                                    const std::vector<double>& w) {
    const std::size_t p = x.front().size() + 1;
    std::vector<long double> a(p * p, 0.0L), b(p, 0.0L);
    for (std::size_t r = 0; r < x.size(); ++r) {
        std::vector<long double> row(p);
        row[0] = 1.0L;
        for (std::size_t c = 1; c < p; ++c) row[c] = x[r][c - 1];
        for (std::size_t i = 0; i < p; ++i) {
            b[i] += w[r] * row[i] * static_cast<long double>(y[r]);
            for (std::size_t j = 0; j < p; ++j) a[i * p + j] += w[r] * row[i] * row[j];
        }
    }
    return solve_dense(a, b, p, 1e-10L);
}

// 1-Wasserstein distance as the integral of |F^-1(t) - G^-1(t)| over (0, 1).
inline long double w1_quantile(std::vector<double> x, std::vector<double> y) {
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const long double nx = x.size(), ny = y.size();
    std::vector<long double> cuts;
    for (std::size_t i = 0; i <= x.size(); ++i) cuts.push_back(i / nx);
    for (std::size_t j = 0; j <= y.size(); ++j) cuts.push_back(j / ny);
    std::sort(cuts.begin(), cuts.end());
    long double total = 0.0L;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        const long double lo = cuts[c], hi = cuts[c + 1];
        if (hi - lo <= 0.0L) continue;
        const long double mid = 0.5L * (lo + hi);
        const auto qx = x[std::min<std::size_t>(static_cast<std::size_t>(mid * nx), x.size() - 1)];
        const auto qy = y[std::min<std::size_t>(static_cast<std::size_t>(mid * ny), y.size() - 1)];
        total += (hi - lo) * std::fabs(static_cast<long double>(qx) - qy);
    }
    return total;
}

}  // namespace oracle
