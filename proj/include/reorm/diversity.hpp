#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace reorm {

// Externally supplied embedding vectors for one dataset. Rows are
// observations; no NaN/Inf admitted.
struct EmbeddingSet {
    std::string label;
    std::vector<std::string> ids; // one per row
    Eigen::MatrixXd vectors;      // N x D

    int n() const { return int(vectors.rows()); }
    int dim() const { return int(vectors.cols()); }
    void validate() const;
};

// JSON-lines loader: {"id": ..., "vector": [...]} per line. When a
// sidecar "<path>.sha256" exists the file digest must match it.
EmbeddingSet load_embeddings_jsonl(const std::string& path, const std::string& label = "");

// Little-endian binary matrix: magic "REMB", u32 version, u32 n, u32 d,
// n*d float32 values, then the SHA-256 of the payload. Always verified.
EmbeddingSet load_embeddings_binary(const std::string& path, const std::string& label = "");
void save_embeddings_binary(const std::string& path, const EmbeddingSet& set);

// Picks by extension (.jsonl vs anything else) and labels the set from
// the file stem when no label is given.
EmbeddingSet load_embeddings(const std::string& path, const std::string& label = "");

// Scales every row to unit Euclidean norm; a zero row is an error naming
// the row.
EmbeddingSet l2_normalize(const EmbeddingSet& set);

// Reduces the larger set to the size of the smaller by sampling without
// replacement: Fisher-Yates shuffle of row indices seeded with `seed`,
// first min(Na,Nb) kept, sorted ascending so original row order survives.
std::pair<EmbeddingSet, EmbeddingSet> subsample_match(const EmbeddingSet& a,
                                                      const EmbeddingSet& b, std::uint64_t seed);

// Cumulative explained variance ratios of the sample covariance
// (mean-centered, divisor N-1), eigenvalues sorted descending, length
// min(N-1, D).
std::vector<double> pca_explained_variance(const EmbeddingSet& set);

// Smallest k whose cumulative ratio reaches the threshold.
int components_for(const std::vector<double>& cumulative_ratios, double threshold);

// Scores of the top-k principal components (N x k), used for t-SNE
// initialization.
Eigen::MatrixXd pca_scores(const Eigen::MatrixXd& data, int k);

struct TsneParams {
    double perplexity = 30.0;
    int iterations = 1000;
    double early_exaggeration = 12.0;
    int exaggeration_until = 250;
    double learning_rate = 0.0; // 0 = max(N/12, 50)
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch = 250;
    std::uint64_t seed = 0;
    int trace_every = 50; // KL checkpoints after exaggeration lifts
};

struct TsneResult {
    Eigen::MatrixXd points; // N x 2
    // (iteration, KL against the un-exaggerated affinities), recorded
    // from the first post-exaggeration iteration onward
    std::vector<std::pair<int, double>> kl_trace;
};

// Exact O(N^2) t-SNE with per-point bandwidths matched to the perplexity
// by binary search, symmetrized affinities, PCA initialization (first two
// components scaled to 1e-4 std), and momentum gradient descent with
// early exaggeration. Deterministic for fixed inputs and params.
TsneResult tsne(const EmbeddingSet& set, const TsneParams& params = {});

// Fraction of points whose euclidean nearest neighbor shares their label.
double nearest_neighbor_purity(const Eigen::MatrixXd& points, const std::vector<int>& labels);

struct DiversityOptions {
    std::uint64_t seed = 0;
    TsneParams tsne_params;
    std::vector<double> thresholds{0.90, 0.95};
};

// End-to-end analysis for the CLI: L2-normalize every set, subsample all
// to the smallest N, run joint t-SNE, and compute per-set cumulative
// explained variance. Writes tsne_points.csv, variance_<label>.csv, and
// summary.json under out_dir.
void run_diversity(const std::vector<std::string>& embedding_paths,
                   const DiversityOptions& options, const std::string& out_dir);

} // namespace reorm
