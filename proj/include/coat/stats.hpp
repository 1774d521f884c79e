#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coat/core.hpp"

namespace coat::stats {

/// Outcome of one conditional-independence test.
struct CiResult {
    double statistic = 0.0;
    double p_value = 1.0;  // in [0, 1]
    bool independent = true;  // p_value > alpha
    double alpha = 0.05;
    int conditioning_size = 0;
};

/// Standard normal CDF.
double normal_cdf(double z);
/// Standard normal quantile (inverse CDF) for p in (0, 1).
double normal_quantile(double p);

/// Pearson correlation matrix of the columns of `data`. Constant columns get zero off-diagonals.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& data);

/// Fisher-Z test of column x against column y given columns s.
///
/// The partial correlation is read off the correlation matrix by inverting the
/// conditioning block. A constant x or y is reported independent (p = 1); constant
/// conditioning columns are dropped. Throws DeterministicRelationError when the
/// conditioning block is singular or x/y is an exact linear function of it, and
/// InsufficientSamplesError when n <= |s| + 3.
CiResult fisher_z_test(const Eigen::MatrixXd& data, int x, int y, std::span<const int> s, double alpha);

/// Same test on a precomputed correlation matrix (n rows of data).
CiResult fisher_z_test_corr(const Eigen::MatrixXd& corr, std::size_t n, int x, int y, std::span<const int> s,
                            double alpha);

/// Plug-in entropy estimate in nats.
struct EntropyEstimate {
    double value = 0.0;
    int support_size = 0;  // distinct target values seen
    int n_effective = 0;
};

/// H(Y | configuration of `given`) restricted to the rows in `subset`, natural log.
/// Empty `given` yields the plain entropy of Y on the subset.
EntropyEstimate conditional_entropy(const FactorTable& table, std::span<const std::size_t> subset,
                                    std::span<const std::string> given);

/// Estimate of I(Y; X | h_given(X)) over all rows. Each raw sample determines its label,
/// so H(Y | X) = 0 and the estimate reduces to H(Y | h_given(X)).
EntropyEstimate cmi_proxy(const FactorTable& table, std::span<const std::string> given);

struct Clustering {
    int k = 1;
    std::vector<int> assignments;
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
    int iterations = 0;
    /// Set when fewer distinct points than the requested k forced k down.
    bool k_reduced = false;
    /// Inertia after seeding and after each Lloyd step.
    std::vector<double> inertia_trace;
};

/// Lloyd's k-means from k-means++ seeding; deterministic for a fixed seed.
/// Rows of `points` are samples. Stops at an assignment fixpoint or after `max_iter` steps.
Clustering kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed, int max_iter = 100);

}  // namespace coat::stats
