#include "smile/surrogate.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numeric>

#include "smile/error.hpp"

namespace smile {

std::string to_string(SurrogateMethod m) {
    return m == SurrogateMethod::kWeightedLeastSquares ? "weighted-least-squares" : "bayesian-ridge";
}

SurrogateMethod parse_surrogate_method(const std::string& s) {
    if (s == "wls" || s == "weighted-least-squares") return SurrogateMethod::kWeightedLeastSquares;
    if (s == "bayes" || s == "bayesian-ridge" || s == "baylime") return SurrogateMethod::kBayesianRidge;
    throw Error(ErrorCode::kInvalidArgument, "unknown surrogate method '" + s + "'");
}

double SurrogateFit::predict(const Mask& row) const {
    double y = intercept;
    for (std::size_t j = 0; j < coefficients.size() && j < row.size(); ++j)
        if (row[j]) y += coefficients[j];
    return y;
}

double weighted_square_loss(std::span<const Mask> design, std::span<const double> response,
                            std::span<const double> weights, std::span<const double> coefficients, double intercept) {
    if (design.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < design.size(); ++i) {
        double yhat = intercept;
        for (std::size_t j = 0; j < coefficients.size(); ++j)
            if (design[i][j]) yhat += coefficients[j];
        const double r = response[i] - yhat;
        sum += weights[i] * r * r;
    }
    return sum / static_cast<double>(design.size());
}

namespace {

struct Problem {
    std::size_t rows = 0;
    std::size_t width = 0;
    std::vector<std::size_t> active;
    std::vector<std::size_t> degenerate;
};

Problem validate(std::span<const Mask> design, std::span<const double> response, std::span<const double> weights) {
    if (design.empty()) throw Error(ErrorCode::kInvalidArgument, "empty design matrix");
    if (response.size() != design.size() || weights.size() != design.size())
        throw Error(ErrorCode::kLengthMismatch, "design, response and weights must have equal row counts");
    Problem p;
    p.rows = design.size();
    p.width = design.front().size();
    if (p.width == 0) throw Error(ErrorCode::kInvalidArgument, "design has no columns");
    bool any_positive = false;
    for (std::size_t i = 0; i < p.rows; ++i) {
        if (design[i].size() != p.width) throw Error(ErrorCode::kLengthMismatch, "ragged design matrix");
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
            throw Error(ErrorCode::kInvalidArgument, "weights must be finite and nonnegative");
        if (!std::isfinite(response[i])) throw Error(ErrorCode::kInvalidArgument, "non-finite response");
        any_positive = any_positive || weights[i] > 0.0;
    }
    if (!any_positive) throw Error(ErrorCode::kAllZeroWeights, "no sample has positive weight");

    for (std::size_t j = 0; j < p.width; ++j) {
        int first = -1;
        bool constant = true;
        for (std::size_t i = 0; i < p.rows && constant; ++i) {
            if (weights[i] <= 0.0) continue;
            if (first < 0) first = design[i][j] ? 1 : 0;
            else if ((design[i][j] ? 1 : 0) != first) constant = false;
        }
        (constant ? p.degenerate : p.active).push_back(j);
    }
    return p;
}

double condition_of(const Eigen::MatrixXd& gram) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

SurrogateFit finish(SurrogateFit fit, const Problem& p, std::span<const Mask> design, std::span<const double> response,
                    std::span<const double> weights) {
    fit.degenerate_columns = p.degenerate;
    fit.weighted_loss = weighted_square_loss(design, response, weights, fit.coefficients, fit.intercept);
    return fit;
}

double weighted_mean(std::span<const double> v, std::span<const double> w) {
    double sw = 0.0, s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        sw += w[i];
        s += w[i] * v[i];
    }
    return s / sw;
}

}  // namespace

SurrogateFit fit_wls(std::span<const Mask> design, std::span<const double> response, std::span<const double> weights) {
    const Problem p = validate(design, response, weights);
    SurrogateFit fit;
    fit.method = SurrogateMethod::kWeightedLeastSquares;
    fit.coefficients.assign(p.width, 0.0);

    const std::size_t k = p.active.size() + 1;
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    Eigen::VectorXd row(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < p.rows; ++i) {
        if (weights[i] <= 0.0) continue;
        row(0) = 1.0;
        for (std::size_t a = 0; a < p.active.size(); ++a)
            row(static_cast<Eigen::Index>(a + 1)) = design[i][p.active[a]] ? 1.0 : 0.0;
        gram.noalias() += weights[i] * row * row.transpose();
        rhs.noalias() += weights[i] * response[i] * row;
    }

    fit.condition_diagnostic = condition_of(gram);
    if (!(fit.condition_diagnostic <= 1e12)) {
        fit.ridge_lambda = 1e-8;
        for (Eigen::Index d = 1; d < static_cast<Eigen::Index>(k); ++d) gram(d, d) += fit.ridge_lambda;
    }
    const Eigen::VectorXd beta = gram.ldlt().solve(rhs);

    fit.intercept = beta(0);
    for (std::size_t a = 0; a < p.active.size(); ++a)
        fit.coefficients[p.active[a]] = beta(static_cast<Eigen::Index>(a + 1));
    return finish(std::move(fit), p, design, response, weights);
}

SurrogateFit fit_bayesian_ridge(std::span<const Mask> design, std::span<const double> response,
                                std::span<const double> weights) {
    const Problem p = validate(design, response, weights);
    SurrogateFit fit;
    fit.method = SurrogateMethod::kBayesianRidge;
    fit.coefficients.assign(p.width, 0.0);

    // Gamma hyperpriors on both precisions, as in the usual evidence procedure.
    constexpr double kShape = 1e-6;
    constexpr double kRate = 1e-6;
    constexpr double kTol = 1e-6;
    constexpr int kMaxIter = 300;

    std::vector<std::size_t> used;
    for (std::size_t i = 0; i < p.rows; ++i)
        if (weights[i] > 0.0) used.push_back(i);
    const auto n = static_cast<Eigen::Index>(used.size());
    const auto k = static_cast<Eigen::Index>(p.active.size());

    std::vector<double> w_used, y_used;
    for (auto i : used) {
        w_used.push_back(weights[i]);
        y_used.push_back(response[i]);
    }
    const double y_mean = weighted_mean(y_used, w_used);

    Eigen::VectorXd x_mean = Eigen::VectorXd::Zero(k);
    const double w_total = std::accumulate(w_used.begin(), w_used.end(), 0.0);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index a = 0; a < k; ++a)
            if (design[used[r]][p.active[a]]) x_mean(a) += w_used[r];
    x_mean /= w_total;

    Eigen::MatrixXd x(n, k);
    Eigen::VectorXd y(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double sw = std::sqrt(w_used[r]);
        for (Eigen::Index a = 0; a < k; ++a) x(r, a) = ((design[used[r]][p.active[a]] ? 1.0 : 0.0) - x_mean(a)) * sw;
        y(r) = (y_used[r] - y_mean) * sw;
    }

    double variance = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) variance += y(r) * y(r);
    variance /= w_total;
    double alpha = 1.0 / (variance + std::numeric_limits<double>::epsilon());
    double lambda = 1.0;

    if (k == 0) {
        fit.intercept = y_mean;
        fit.alpha_noise = alpha;
        fit.lambda_prior = lambda;
        return finish(std::move(fit), p, design, response, weights);
    }

    const Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const Eigen::VectorXd eig = es.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd& basis = es.eigenvectors();
    const Eigen::VectorXd xty_rot = basis.transpose() * (x.transpose() * y);

    auto posterior_mean = [&](double a, double l) {
        const Eigen::VectorXd scaled = xty_rot.array() / (eig.array() + l / a);
        return Eigen::VectorXd(basis * scaled);
    };

    Eigen::VectorXd coef = posterior_mean(alpha, lambda);
    int iter = 0;
    for (; iter < kMaxIter; ++iter) {
        const double rss = (y - x * coef).squaredNorm();
        const double gamma = (alpha * eig.array() / (lambda + alpha * eig.array())).sum();
        const double lambda_next = (gamma + 2.0 * kShape) / (coef.squaredNorm() + 2.0 * kRate);
        const double alpha_next = (static_cast<double>(n) - gamma + 2.0 * kShape) / (rss + 2.0 * kRate);
        const bool converged = std::abs(lambda_next - lambda) <= kTol * std::abs(lambda) &&
                               std::abs(alpha_next - alpha) <= kTol * std::abs(alpha);
        lambda = lambda_next;
        alpha = alpha_next;
        coef = posterior_mean(alpha, lambda);
        if (converged) {
            ++iter;
            break;
        }
    }

    fit.iterations = iter;
    fit.alpha_noise = alpha;
    fit.lambda_prior = lambda;
    const double lo = eig.minCoeff() + lambda / alpha;
    const double hi = eig.maxCoeff() + lambda / alpha;
    fit.condition_diagnostic = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    fit.ridge_lambda = lambda / alpha;

    fit.intercept = y_mean;
    for (Eigen::Index a = 0; a < k; ++a) {
        fit.coefficients[p.active[a]] = coef(a);
        fit.intercept -= coef(a) * x_mean(a);
    }
    return finish(std::move(fit), p, design, response, weights);
}

SurrogateFit fit_surrogate(SurrogateMethod method, std::span<const Mask> design, std::span<const double> response,
                           std::span<const double> weights) {
    return method == SurrogateMethod::kWeightedLeastSquares ? fit_wls(design, response, weights)
                                                            : fit_bayesian_ridge(design, response, weights);
}

}  // namespace smile
