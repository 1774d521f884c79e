#include "coat/graph/lingam.hpp"

#include <cmath>
#include <numbers>

#include "coat/errors.hpp"

namespace coat::graph {

namespace {

Eigen::VectorXd standardize(const Eigen::VectorXd& v) {
    const double mean = v.mean();
    const Eigen::VectorXd c = v.array() - mean;
    const double sd = std::sqrt(c.squaredNorm() / static_cast<double>(v.size()));
    if (sd < 1e-12) return Eigen::VectorXd::Zero(v.size());
    return c / sd;
}

// Maximum-entropy approximation of differential entropy for a unit-variance variable.
double entropy(const Eigen::VectorXd& u) {
    constexpr double k1 = 79.047, k2 = 7.4129, gamma = 0.37457;
    const double n = static_cast<double>(u.size());
    const double logcosh = u.array().cosh().log().sum() / n;
    const double gauss = (u.array() * (-u.array().square() / 2.0).exp()).sum() / n;
    return (1.0 + std::log(2.0 * std::numbers::pi)) / 2.0 - k1 * (logcosh - gamma) * (logcosh - gamma) - k2 * gauss * gauss;
}

Eigen::VectorXd residual(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj) {
    const double var = xj.squaredNorm();
    if (var < 1e-12) return xi;
    return xi - (xi.dot(xj) / var) * xj;
}

// Likelihood-ratio difference; positive favours xi -> xj.
double diff_mutual_info(const Eigen::VectorXd& xi_std, const Eigen::VectorXd& xj_std, const Eigen::VectorXd& ri_j,
                        const Eigen::VectorXd& rj_i) {
    return (entropy(xj_std) + entropy(standardize(ri_j))) - (entropy(xi_std) + entropy(standardize(rj_i)));
}

}  // namespace

LingamOutput direct_lingam_detailed(const Eigen::MatrixXd& data, std::vector<std::string> nodes,
                                    const LingamOptions& options) {
    const auto p = static_cast<int>(data.cols());
    if (static_cast<std::size_t>(p) != nodes.size()) throw InvariantError("direct_lingam: column count does not match node names");
    LingamOutput out{Dag(nodes), {}, Eigen::MatrixXd::Zero(p, p)};
    if (p == 0) return out;
    if (p == 1) {
        out.order = {0};
        return out;
    }
    Eigen::MatrixXd x(data.rows(), p);
    for (int j = 0; j < p; ++j) x.col(j) = standardize(data.col(j));
    {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(x);
        lu.setThreshold(1e-10);
        if (lu.rank() < p) throw InvariantError("direct_lingam: data matrix is rank deficient");
    }

    std::vector<int> remaining(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) remaining[static_cast<std::size_t>(j)] = j;
    Eigen::MatrixXd work = x;
    while (!remaining.empty()) {
        if (remaining.size() == 1) {
            out.order.push_back(remaining.front());
            break;
        }
        int best = remaining.front();
        double best_score = -std::numeric_limits<double>::infinity();
        for (int i : remaining) {
            double m = 0.0;
            const Eigen::VectorXd xi = standardize(work.col(i));
            for (int j : remaining) {
                if (j == i) continue;
                const Eigen::VectorXd xj = standardize(work.col(j));
                const double d = diff_mutual_info(xi, xj, residual(xi, xj), residual(xj, xi));
                m += std::min(0.0, d) * std::min(0.0, d);
            }
            const double score = -m;
            if (score > best_score) {
                best_score = score;
                best = i;
            }
        }
        out.order.push_back(best);
        std::erase(remaining, best);
        const Eigen::VectorXd root = work.col(best);
        for (int j : remaining) work.col(j) = residual(work.col(j), root);
    }

    // regress each variable on its predecessors in the order
    for (std::size_t k = 1; k < out.order.size(); ++k) {
        const int target = out.order[k];
        Eigen::MatrixXd preds(x.rows(), static_cast<Eigen::Index>(k));
        for (std::size_t q = 0; q < k; ++q) preds.col(static_cast<Eigen::Index>(q)) = x.col(out.order[q]);
        const Eigen::VectorXd coef = preds.colPivHouseholderQr().solve(x.col(target));
        for (std::size_t q = 0; q < k; ++q) {
            const double c = coef(static_cast<Eigen::Index>(q));
            out.adjacency(target, out.order[q]) = c;
            if (std::abs(c) > options.prune_threshold) out.dag.add_edge(out.order[q], target);
        }
    }
    return out;
}

Dag direct_lingam(const Eigen::MatrixXd& data, std::vector<std::string> nodes, const LingamOptions& options) {
    return direct_lingam_detailed(data, std::move(nodes), options).dag;
}

}  // namespace coat::graph
