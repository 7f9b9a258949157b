#pragma once

#include <span>
#include <string>
#include <vector>

#include "smile/perturbation.hpp"

namespace smile {

enum class SurrogateMethod { kWeightedLeastSquares, kBayesianRidge };

std::string to_string(SurrogateMethod m);
SurrogateMethod parse_surrogate_method(const std::string& s);

/// Per-token linear surrogate over mask rows.
struct SurrogateFit {
    std::vector<double> coefficients;
    double intercept = 0.0;
    /// (1/n) * sum_i w_i (y_i - yhat_i)^2 at the fit.
    double weighted_loss = 0.0;
    SurrogateMethod method = SurrogateMethod::kWeightedLeastSquares;
    /// Eigenvalue ratio of the weighted Gram matrix (inf when singular).
    double condition_diagnostic = 0.0;
    /// Ridge term actually applied (0 for a plain solve).
    double ridge_lambda = 0.0;
    /// Token columns constant over all weighted rows; their coefficient is 0.
    std::vector<std::size_t> degenerate_columns;
    /// Bayesian ridge only: noise and prior precisions, iteration count.
    double alpha_noise = 0.0;
    double lambda_prior = 0.0;
    int iterations = 0;

    double predict(const Mask& row) const;
};

/// Minimizes sum_i w_i (y_i - b0 - x_i . beta)^2 through the weighted normal
/// equations. Singular or badly conditioned (> 1e12) systems are refit with a
/// 1e-8 ridge term.
SurrogateFit fit_wls(std::span<const Mask> design, std::span<const double> response, std::span<const double> weights);

/// MAP weighted ridge with noise/prior precisions tuned by evidence
/// maximization (start alpha = 1/var(y), lambda = 1; stop at 1e-6 relative
/// change or 300 iterations). Intercept is unpenalized.
SurrogateFit fit_bayesian_ridge(std::span<const Mask> design, std::span<const double> response,
                                std::span<const double> weights);

SurrogateFit fit_surrogate(SurrogateMethod method, std::span<const Mask> design, std::span<const double> response,
                           std::span<const double> weights);

/// Value of the weighted square loss for arbitrary coefficients.
double weighted_square_loss(std::span<const Mask> design, std::span<const double> response,
                            std::span<const double> weights, std::span<const double> coefficients, double intercept);

}  // namespace smile
