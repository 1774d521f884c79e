#include "coat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "coat/errors.hpp"
#include "coat/rng.hpp"

namespace coat::stats {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error("normal_quantile: p must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& data) {
    const auto n = data.rows();
    const auto k = data.cols();
    Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = i + 1; j < k; ++j) {
            const double d = std::sqrt(cov(i, i) * cov(j, j));
            const double r = d > 0.0 ? std::clamp(cov(i, j) / d, -1.0, 1.0) : 0.0;
            corr(i, j) = corr(j, i) = r;
        }
        if (cov(i, i) <= 0.0) corr(i, i) = 0.0;  // flags a constant column
    }
    return corr;
}

namespace {

constexpr double kSingularTol = 1e-10;

CiResult finish(double r, std::size_t n, std::size_t cond, double alpha) {
    CiResult res;
    res.alpha = alpha;
    res.conditioning_size = static_cast<int>(cond);
    r = std::clamp(r, -1.0, 1.0);
    if (std::abs(r) >= 1.0 - 1e-12) {
        res.statistic = std::copysign(std::numeric_limits<double>::infinity(), r);
        res.p_value = 0.0;
    } else {
        res.statistic = std::sqrt(static_cast<double>(n) - static_cast<double>(cond) - 3.0) * std::atanh(r);
        res.p_value = std::clamp(2.0 * (1.0 - normal_cdf(std::abs(res.statistic))), 0.0, 1.0);
    }
    res.independent = res.p_value > alpha;
    return res;
}

}  // namespace

CiResult fisher_z_test_corr(const Eigen::MatrixXd& corr, std::size_t n, int x, int y, std::span<const int> s,
                            double alpha) {
    if (x == y) throw Error("fisher_z_test: x and y must differ");
    for (int v : s)
        if (v == x || v == y) throw Error("fisher_z_test: x and y must not be in the conditioning set");
    if (static_cast<double>(n) <= static_cast<double>(s.size()) + 3.0)
        throw InsufficientSamplesError("fisher_z_test: need n > |s| + 3 (n = " + std::to_string(n) +
                                       ", |s| = " + std::to_string(s.size()) + ")");

    // a constant tested column is independent of everything
    if (corr(x, x) == 0.0 || corr(y, y) == 0.0) {
        CiResult res;
        res.alpha = alpha;
        res.conditioning_size = static_cast<int>(s.size());
        res.statistic = 0.0;
        res.p_value = 1.0;
        res.independent = true;
        return res;
    }
    std::vector<int> cond;
    for (int v : s)
        if (corr(v, v) != 0.0) cond.push_back(v);

    if (cond.empty()) return finish(corr(x, y), n, s.size(), alpha);

    const auto m = static_cast<Eigen::Index>(cond.size());
    Eigen::MatrixXd css(m, m);
    Eigen::VectorXd cxs(m), cys(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) css(i, j) = corr(cond[i], cond[j]);
        cxs(i) = corr(x, cond[i]);
        cys(i) = corr(y, cond[i]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(css);
    lu.setThreshold(kSingularTol);
    if (!lu.isInvertible())
        throw DeterministicRelationError("fisher_z_test: conditioning columns are linearly dependent");
    const Eigen::VectorXd bx = lu.solve(cxs);
    const Eigen::VectorXd by = lu.solve(cys);
    const double vxx = 1.0 - cxs.dot(bx);
    const double vyy = 1.0 - cys.dot(by);
    const double vxy = corr(x, y) - cxs.dot(by);
    if (vxx <= kSingularTol || vyy <= kSingularTol)
        throw DeterministicRelationError("fisher_z_test: tested column is a linear function of the conditioning set");
    return finish(vxy / std::sqrt(vxx * vyy), n, s.size(), alpha);
}

CiResult fisher_z_test(const Eigen::MatrixXd& data, int x, int y, std::span<const int> s, double alpha) {
    const auto k = static_cast<int>(data.cols());
    auto check = [k](int v) {
        if (v < 0 || v >= k) throw Error("fisher_z_test: column index out of range");
    };
    check(x);
    check(y);
    for (int v : s) check(v);
    return fisher_z_test_corr(correlation_matrix(data), static_cast<std::size_t>(data.rows()), x, y, s, alpha);
}

// ---------------------------------------------------------------- entropy

namespace {

double entropy_of_counts(const std::map<int, int>& counts, int total) {
    double h = 0.0;
    for (const auto& [v, c] : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

EntropyEstimate conditional_entropy(const FactorTable& table, std::span<const std::size_t> subset,
                                    std::span<const std::string> given) {
    if (subset.empty()) throw Error("conditional_entropy: subset is empty");
    std::vector<const std::vector<int>*> cols;
    for (const auto& g : given) cols.push_back(&table.column(g));

    std::map<std::vector<int>, std::map<int, int>> groups;
    std::set<int> support;
    for (std::size_t r : subset) {
        if (r >= table.rows()) throw Error("conditional_entropy: row index out of range");
        std::vector<int> key;
        key.reserve(cols.size());
        for (const auto* c : cols) key.push_back((*c)[r]);
        const int y = table.target()[r];
        ++groups[key][y];
        support.insert(y);
    }
    const int n = static_cast<int>(subset.size());
    double h = 0.0;
    for (const auto& [key, counts] : groups) {
        int m = 0;
        for (const auto& [v, c] : counts) m += c;
        h += static_cast<double>(m) / n * entropy_of_counts(counts, m);
    }
    EntropyEstimate est;
    est.value = std::max(0.0, h);
    est.support_size = static_cast<int>(support.size());
    est.n_effective = n;
    return est;
}

EntropyEstimate cmi_proxy(const FactorTable& table, std::span<const std::string> given) {
    std::vector<std::size_t> all(table.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return conditional_entropy(table, all, given);
}

// ---------------------------------------------------------------- k-means

namespace {

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        d += t * t;
    }
    return d;
}

}  // namespace

Clustering kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed, int max_iter) {
    if (k < 1) throw Error("kmeans: k must be >= 1");
    if (points.empty()) throw Error("kmeans: no points");
    const std::size_t n = points.size();
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw Error("kmeans: ragged point matrix");

    Clustering out;
    const std::set<std::vector<double>> distinct(points.begin(), points.end());
    if (static_cast<std::size_t>(k) > distinct.size()) {
        k = static_cast<int>(distinct.size());
        out.k_reduced = true;
    }
    out.k = k;

    // k-means++ seeding
    Rng rng(seed);
    std::vector<std::vector<double>> centroids;
    centroids.push_back(points[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n - 1)))]);
    std::vector<double> d2(n);
    while (centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sqdist(points[i], c));
            d2[i] = best;
            total += best;
        }
        // total > 0 because distinct points outnumber current centroids
        centroids.push_back(points[rng.categorical(d2)]);
    }

    std::vector<int> assign(n, -1);
    auto assign_step = [&]() {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = sqdist(points[i], centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sqdist(points[i], centroids[static_cast<std::size_t>(c)]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (assign[i] != best) changed = true;
            assign[i] = best;
            inertia += bd;
        }
        return std::pair{changed, inertia};
    };
    auto update_step = [&]() {
        std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[static_cast<std::size_t>(assign[i])];
            for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
            ++counts[static_cast<std::size_t>(assign[i])];
        }
        for (int c = 0; c < k; ++c) {
            // an emptied cluster keeps its previous centroid
            if (counts[static_cast<std::size_t>(c)] == 0) continue;
            for (std::size_t d = 0; d < dim; ++d)
                centroids[static_cast<std::size_t>(c)][d] =
                    sums[static_cast<std::size_t>(c)][d] / counts[static_cast<std::size_t>(c)];
        }
    };

    auto [changed, inertia] = assign_step();
    out.inertia_trace.push_back(inertia);
    int it = 0;
    while (it < max_iter) {
        update_step();
        ++it;
        std::tie(changed, inertia) = assign_step();
        out.inertia_trace.push_back(inertia);
        if (!changed) break;
    }
    // final inertia against the final centroids
    double final_inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        final_inertia += sqdist(points[i], centroids[static_cast<std::size_t>(assign[i])]);

    out.assignments = std::move(assign);
    out.centroids = std::move(centroids);
    out.inertia = final_inertia;
    out.iterations = it;
    return out;
}

}  // namespace coat::stats
