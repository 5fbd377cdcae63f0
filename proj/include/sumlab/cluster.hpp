#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "sumlab/common.hpp"

namespace sumlab {

/// Row-per-example embedding matrix. Analysis always runs in double
/// precision regardless of the model's training scalar.
struct EmbeddingSet {
    Eigen::MatrixXd vectors;       // N x d
    std::vector<std::string> ids;  // N example ids

    void validate() const;
};

struct ClusterReport {
    int k = 0;
    std::vector<int> assignments;  // N labels in [0, k)
    Eigen::MatrixXd centers;       // k x d
    double inertia = 0.0;          // sum of squared distances to assigned centers
    double silhouette = 0.0;       // 0 when k == 1 (undefined)
};

struct GapReport {
    struct Entry {
        int k = 0;
        double gap = 0.0;
        double sk = 0.0;      // reference-dispersion std, inflated by sqrt(1 + 1/B)
        double log_wk = 0.0;  // log within-cluster dispersion of the data
    };
    std::vector<Entry> entries;  // k strictly increasing
    int chosen_k = 0;
};

/// Lloyd iterations from k-means++ seeding; runs to an assignment fixpoint
/// or max_iter. Empty clusters are repaired by stealing the farthest point.
ClusterReport kmeans(const EmbeddingSet& embeddings, int k, std::uint64_t seed, int max_iter = 200);

/// Best-of-n_restarts kmeans by inertia (restart seeds derived from seed).
ClusterReport kmeans_restarts(const EmbeddingSet& embeddings, int k, std::uint64_t seed,
                              int n_restarts, int max_iter = 200);

/// Mean silhouette over points (Euclidean); singleton clusters score 0.
/// Requires at least two clusters.
double silhouette(const EmbeddingSet& embeddings, const std::vector<int>& assignments);

/// Gap(k) = mean_b log W*_kb - log W_k with B uniform reference sets drawn
/// in the per-dimension bounding box of the data. chosen_k is the smallest
/// k with Gap(k) >= Gap(k+1) - s_{k+1}, else the largest evaluated k.
GapReport gap_statistic(const EmbeddingSet& embeddings, const std::vector<int>& k_values, int B,
                        std::uint64_t seed);

/// Mean-centered projection onto the top-2 principal directions (power
/// iteration with deflation). Sign convention: the largest-magnitude
/// component of each axis is positive.
Eigen::MatrixXd project_2d(const EmbeddingSet& embeddings);

}  // namespace sumlab

#include "sumlab/model.hpp"
#include "sumlab/text.hpp"

namespace sumlab {

/// Encode each summary with the shared encoder (BOS prepended) and take the
/// position-0 output vector as its embedding.
template <typename S>
EmbeddingSet pool_summary_embeddings(const Model<S>& model, const Vocabulary& vocab,
                                     const std::vector<std::string>& ids,
                                     const std::vector<std::string>& summaries) {
    if (summaries.empty()) throw InputError("pool_summary_embeddings: no summaries");
    if (ids.size() != summaries.size())
        throw InputError("pool_summary_embeddings: ids and summaries must align");
    NoGradGuard off;
    EmbeddingSet set;
    set.vectors.resize(static_cast<Eigen::Index>(summaries.size()), model.config().d_model);
    set.ids = ids;
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        const TokenSequence seq =
            encode(vocab, tokenize(summaries[i]), model.config().max_guid_len, true, false);
        const Tensor<S> enc = model.encode(seq.ids);
        set.vectors.row(static_cast<Eigen::Index>(i)) =
            enc.matrix().row(0).template cast<double>();
    }
    return set;
}

}  // namespace sumlab
