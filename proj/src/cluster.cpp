#include "sumlab/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sumlab {

void EmbeddingSet::validate() const {
    if (vectors.rows() < 2) throw InputError("embedding set needs at least 2 rows");
    if (!vectors.allFinite()) throw NumericError("embedding set contains non-finite values");
    if (static_cast<Eigen::Index>(ids.size()) != vectors.rows())
        throw InputError("embedding ids do not match the matrix rows");
}

namespace {

double squared_distance(const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::MatrixXd& centers,
                        Eigen::Index c) {
    return (x.row(i) - centers.row(c)).squaredNorm();
}

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& x, int k, Rng& rng) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd centers(k, x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - centers.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            // Draw proportional to squared distance from the nearest center.
            const double r = rng.uniform01() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        centers.row(c) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], (x.row(i) - centers.row(c)).squaredNorm());
    }
    return centers;
}

double compute_inertia(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers,
                       const std::vector<int>& assignments) {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        inertia += squared_distance(x, i, centers, assignments[static_cast<std::size_t>(i)]);
    return inertia;
}

}  // namespace

ClusterReport kmeans(const EmbeddingSet& embeddings, int k, std::uint64_t seed, int max_iter) {
    embeddings.validate();
    const Eigen::MatrixXd& x = embeddings.vectors;
    const Eigen::Index n = x.rows();
    if (k < 1 || k > n)
        throw InputError("kmeans: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) +
                         "]");

    Rng rng(seed);
    Eigen::MatrixXd centers = kmeanspp_seed(x, k, rng);
    std::vector<int> assignments(static_cast<std::size_t>(n), 0);
    double prev_inertia = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < max_iter; ++iter) {
        // Assign (ties go to the lowest center index).
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(x, i, centers, 0);
            for (int c = 1; c < k; ++c) {
                const double d = squared_distance(x, i, centers, c);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assignments[static_cast<std::size_t>(i)] != best) {
                assignments[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }

        // Repair empty clusters with the point farthest from its center.
        std::vector<Eigen::Index> count(static_cast<std::size_t>(k), 0);
        for (int a : assignments) ++count[static_cast<std::size_t>(a)];
        for (int c = 0; c < k; ++c) {
            if (count[static_cast<std::size_t>(c)] > 0) continue;
            Eigen::Index farthest = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const int a = assignments[static_cast<std::size_t>(i)];
                if (count[static_cast<std::size_t>(a)] <= 1) continue;
                const double d = squared_distance(x, i, centers, a);
                if (d > far_d) {
                    far_d = d;
                    farthest = i;
                }
            }
            --count[static_cast<std::size_t>(
                assignments[static_cast<std::size_t>(farthest)])];
            assignments[static_cast<std::size_t>(farthest)] = c;
            count[static_cast<std::size_t>(c)] = 1;
            changed = true;
        }

        // Update centers.
        centers.setZero();
        for (Eigen::Index i = 0; i < n; ++i)
            centers.row(assignments[static_cast<std::size_t>(i)]) += x.row(i);
        for (int c = 0; c < k; ++c) centers.row(c) /= static_cast<double>(count[static_cast<std::size_t>(c)]);

        const double inertia = compute_inertia(x, centers, assignments);
        if (inertia > prev_inertia + 1e-9 * std::max(1.0, prev_inertia))
            throw NumericError("kmeans: inertia increased across a Lloyd iteration");
        prev_inertia = inertia;
        if (!changed) break;
    }

    ClusterReport report;
    report.k = k;
    report.assignments = assignments;
    report.centers = centers;
    report.inertia = compute_inertia(x, centers, assignments);
    report.silhouette = k >= 2 ? silhouette(embeddings, assignments) : 0.0;
    return report;
}

ClusterReport kmeans_restarts(const EmbeddingSet& embeddings, int k, std::uint64_t seed,
                              int n_restarts, int max_iter) {
    if (n_restarts < 1) throw InputError("kmeans_restarts: need at least one restart");
    ClusterReport best;
    bool have = false;
    for (int r = 0; r < n_restarts; ++r) {
        ClusterReport rep = kmeans(embeddings, k, seed + static_cast<std::uint64_t>(r) * 7919ULL,
                                   max_iter);
        if (!have || rep.inertia < best.inertia) {
            best = std::move(rep);
            have = true;
        }
    }
    return best;
}

double silhouette(const EmbeddingSet& embeddings, const std::vector<int>& assignments) {
    embeddings.validate();
    const Eigen::MatrixXd& x = embeddings.vectors;
    const Eigen::Index n = x.rows();
    if (static_cast<Eigen::Index>(assignments.size()) != n)
        throw InputError("silhouette: assignment length mismatch");
    int k = 0;
    for (int a : assignments) k = std::max(k, a + 1);
    if (k < 2) throw InputError("silhouette undefined for fewer than 2 clusters");

    std::vector<Eigen::Index> count(static_cast<std::size_t>(k), 0);
    for (int a : assignments) ++count[static_cast<std::size_t>(a)];
    for (Eigen::Index c = 0; c < k; ++c)
        if (count[static_cast<std::size_t>(c)] == 0)
            throw InputError("silhouette: cluster " + std::to_string(c) + " is empty");

    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int own = assignments[static_cast<std::size_t>(i)];
        if (count[static_cast<std::size_t>(own)] == 1) continue;  // singleton scores 0

        // Mean distance to every cluster.
        std::vector<double> mean_dist(static_cast<std::size_t>(k), 0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            mean_dist[static_cast<std::size_t>(assignments[static_cast<std::size_t>(j)])] +=
                (x.row(i) - x.row(j)).norm();
        }
        const double a = mean_dist[static_cast<std::size_t>(own)] /
                         static_cast<double>(count[static_cast<std::size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == own) continue;
            b = std::min(b, mean_dist[static_cast<std::size_t>(c)] /
                                static_cast<double>(count[static_cast<std::size_t>(c)]));
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

GapReport gap_statistic(const EmbeddingSet& embeddings, const std::vector<int>& k_values, int B,
                        std::uint64_t seed) {
    embeddings.validate();
    if (B < 2) throw InputError("gap_statistic: B must be >= 2");
    if (k_values.empty()) throw InputError("gap_statistic: no k values");
    for (std::size_t i = 1; i < k_values.size(); ++i)
        if (k_values[i] <= k_values[i - 1])
            throw InputError("gap_statistic: k values must be strictly increasing");

    const Eigen::MatrixXd& x = embeddings.vectors;
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    const Eigen::RowVectorXd lo = x.colwise().minCoeff();
    const Eigen::RowVectorXd hi = x.colwise().maxCoeff();

    // Reference sets are shared across k so per-k dispersions are comparable.
    Rng ref_rng(seed);
    std::vector<EmbeddingSet> references;
    references.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
        EmbeddingSet ref;
        ref.vectors.resize(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                ref.vectors(i, j) = ref_rng.uniform(lo[j], hi[j]);
        ref.ids.resize(static_cast<std::size_t>(n));
        references.push_back(std::move(ref));
    }

    constexpr int kRestarts = 4;
    GapReport report;
    for (int k : k_values) {
        const double wk = kmeans_restarts(embeddings, k, seed ^ 0x9e3779b97f4a7c15ULL, kRestarts)
                              .inertia;
        if (wk <= 0.0)
            throw NumericError("gap_statistic: zero within-cluster dispersion (degenerate data)");
        const double log_wk = std::log(wk);

        double mean_log = 0.0;
        std::vector<double> logs(static_cast<std::size_t>(B), 0.0);
        for (int b = 0; b < B; ++b) {
            const double wkb =
                kmeans_restarts(references[static_cast<std::size_t>(b)], k,
                                seed + 1000003ULL * static_cast<std::uint64_t>(b + 1), kRestarts)
                    .inertia;
            if (wkb <= 0.0)
                throw NumericError("gap_statistic: degenerate reference dispersion");
            logs[static_cast<std::size_t>(b)] = std::log(wkb);
            mean_log += logs[static_cast<std::size_t>(b)];
        }
        mean_log /= static_cast<double>(B);
        double var = 0.0;
        for (double l : logs) var += (l - mean_log) * (l - mean_log);
        var /= static_cast<double>(B);

        GapReport::Entry entry;
        entry.k = k;
        entry.gap = mean_log - log_wk;
        entry.sk = std::sqrt(var) * std::sqrt(1.0 + 1.0 / static_cast<double>(B));
        entry.log_wk = log_wk;
        report.entries.push_back(entry);
    }

    report.chosen_k = report.entries.back().k;
    for (std::size_t i = 0; i + 1 < report.entries.size(); ++i) {
        if (report.entries[i].gap >= report.entries[i + 1].gap - report.entries[i + 1].sk) {
            report.chosen_k = report.entries[i].k;
            break;
        }
    }
    return report;
}

Eigen::MatrixXd project_2d(const EmbeddingSet& embeddings) {
    embeddings.validate();
    const Eigen::MatrixXd& x = embeddings.vectors;
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();

    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    if (centered.cwiseAbs().maxCoeff() == 0.0)
        throw NumericError("project_2d: zero-variance data");
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

    // Top-2 eigenvectors by power iteration with deflation.
    Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(2, d);
    double first_eig = 0.0;
    for (int axis = 0; axis < 2; ++axis) {
        Eigen::VectorXd v = Eigen::VectorXd::Ones(d);
        for (Eigen::Index j = 0; j < d; ++j)
            v[j] += 1e-3 * static_cast<double>(j % 7);  // breaks symmetric starts
        if (axis == 1) v -= axes.row(0).transpose() * axes.row(0).dot(v);
        v.normalize();
        double eig = 0.0;
        for (int it = 0; it < 2000; ++it) {
            Eigen::VectorXd w = cov * v;
            if (axis == 1) w -= axes.row(0).transpose() * axes.row(0).dot(w);
            const double norm = w.norm();
            if (norm < 1e-300) {
                eig = 0.0;
                break;  // no remaining variance on this axis
            }
            w /= norm;
            const double delta = (w - v).norm();
            v = w;
            eig = norm;
            if (delta < 1e-14) break;
        }
        if (axis == 0) {
            first_eig = eig;
        } else if (eig <= 1e-12 * std::max(1.0, first_eig)) {
            break;  // rank-1 data: the second coordinate stays zero
        }
        // Sign convention: largest-magnitude component positive.
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v[imax] < 0.0) v = -v;
        axes.row(axis) = v.transpose();
        cov -= eig * v * v.transpose();
    }
    return centered * axes.transpose();
}

}  // namespace sumlab
