#include "reorm/diversity.hpp"

#include "reorm/error.hpp"
#include "reorm/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

namespace fs = std::filesystem;

namespace reorm {

void EmbeddingSet::validate() const {
    if (vectors.rows() < 1) raise(Errc::invalid_argument, "embedding set is empty");
    if (vectors.cols() < 1) raise(Errc::invalid_argument, "embedding vectors have no dimensions");
    if (!ids.empty() && int(ids.size()) != vectors.rows())
        raise(Errc::invalid_argument, "embedding ids do not match row count");
    if (!vectors.allFinite())
        raise(Errc::invalid_argument, "embedding set contains NaN or Inf");
}

EmbeddingSet load_embeddings_jsonl(const std::string& path, const std::string& label) {
    std::string content = read_file(path);
    if (fs::exists(path + ".sha256")) {
        std::string expected = trim(read_file(path + ".sha256"));
        // allow "digest  filename" sha256sum output
        if (auto sp = expected.find_first_of(" \t"); sp != std::string::npos)
            expected = expected.substr(0, sp);
        std::string actual = sha256_hex(content);
        if (actual != expected)
            raise(Errc::format_error,
                  path + ": checksum mismatch (sidecar " + expected + ", file " + actual + ")");
    }

    std::vector<std::vector<double>> rows;
    std::vector<std::string> ids;
    std::size_t pos = 0;
    int lineno = 0;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string::npos) end = content.size();
        std::string line = content.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            raise(Errc::format_error, path + ":" + std::to_string(lineno) + ": invalid JSON");
        try {
            ids.push_back(j.at("id").get<std::string>());
            rows.push_back(j.at("vector").get<std::vector<double>>());
        } catch (const nlohmann::json::exception& ex) {
            raise(Errc::format_error, path + ":" + std::to_string(lineno) + ": " + ex.what());
        }
        if (rows.back().size() != rows.front().size())
            raise(Errc::format_error,
                  path + ":" + std::to_string(lineno) + ": vector length differs from first row");
    }
    if (rows.empty()) raise(Errc::format_error, path + ": no embeddings");

    EmbeddingSet set;
    set.label = label.empty() ? fs::path(path).stem().string() : label;
    set.ids = std::move(ids);
    set.vectors.resize(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            set.vectors(Eigen::Index(i), Eigen::Index(k)) = rows[i][k];
    set.validate();
    return set;
}

namespace {

constexpr char kBinaryMagic[4] = {'R', 'E', 'M', 'B'};

std::uint32_t read_u32le(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

void append_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

} // namespace

EmbeddingSet load_embeddings_binary(const std::string& path, const std::string& label) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 16 + 64 || std::memcmp(bytes.data(), kBinaryMagic, 4) != 0)
        raise(Errc::format_error, path + ": not an embedding matrix file");
    std::uint32_t version = read_u32le(bytes.data() + 4);
    if (version != 1) raise(Errc::format_error, path + ": unsupported version");
    std::uint32_t n = read_u32le(bytes.data() + 8);
    std::uint32_t d = read_u32le(bytes.data() + 12);
    std::size_t payload = std::size_t(n) * d * 4;
    if (bytes.size() != 16 + payload + 64)
        raise(Errc::format_error, path + ": truncated embedding matrix");

    std::string stored(bytes.end() - 64, bytes.end());
    std::string actual = sha256_hex(std::span<const std::uint8_t>(bytes.data() + 16, payload));
    if (stored != actual)
        raise(Errc::format_error, path + ": embedded checksum mismatch");

    EmbeddingSet set;
    set.label = label.empty() ? fs::path(path).stem().string() : label;
    set.vectors.resize(n, d);
    const std::uint8_t* p = bytes.data() + 16;
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t k = 0; k < d; ++k) {
            std::uint32_t bits = read_u32le(p);
            p += 4;
            float f;
            std::memcpy(&f, &bits, 4);
            set.vectors(i, k) = double(f);
        }
    }
    set.ids.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) set.ids.push_back("row" + std::to_string(i));
    set.validate();
    return set;
}

void save_embeddings_binary(const std::string& path, const EmbeddingSet& set) {
    set.validate();
    std::vector<std::uint8_t> bytes;
    bytes.insert(bytes.end(), kBinaryMagic, kBinaryMagic + 4);
    append_u32le(bytes, 1);
    append_u32le(bytes, std::uint32_t(set.n()));
    append_u32le(bytes, std::uint32_t(set.dim()));
    for (int i = 0; i < set.n(); ++i) {
        for (int k = 0; k < set.dim(); ++k) {
            float f = float(set.vectors(i, k));
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            append_u32le(bytes, bits);
        }
    }
    std::string digest =
        sha256_hex(std::span<const std::uint8_t>(bytes.data() + 16, bytes.size() - 16));
    bytes.insert(bytes.end(), digest.begin(), digest.end());
    write_file_bytes(path, bytes);
}

EmbeddingSet load_embeddings(const std::string& path, const std::string& label) {
    if (fs::path(path).extension() == ".jsonl") return load_embeddings_jsonl(path, label);
    return load_embeddings_binary(path, label);
}

EmbeddingSet l2_normalize(const EmbeddingSet& set) {
    set.validate();
    EmbeddingSet out = set;
    for (int i = 0; i < out.n(); ++i) {
        double norm = out.vectors.row(i).norm();
        if (norm == 0.0)
            raise(Errc::invalid_argument,
                  "l2_normalize: row " + std::to_string(i) + " has zero norm");
        out.vectors.row(i) /= norm;
    }
    return out;
}

namespace {

std::vector<int> sample_indices(int total, int keep, std::uint64_t seed) {
    std::vector<int> idx(total);
    for (int i = 0; i < total; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (int i = total - 1; i > 0; --i) {
        int j = int(bounded_uniform(rng, std::uint64_t(i + 1)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    return idx;
}

EmbeddingSet take_rows(const EmbeddingSet& set, const std::vector<int>& rows) {
    EmbeddingSet out;
    out.label = set.label;
    out.vectors.resize(Eigen::Index(rows.size()), set.vectors.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.vectors.row(Eigen::Index(i)) = set.vectors.row(rows[i]);
        if (!set.ids.empty()) out.ids.push_back(set.ids[rows[i]]);
    }
    return out;
}

} // namespace

std::pair<EmbeddingSet, EmbeddingSet> subsample_match(const EmbeddingSet& a,
                                                      const EmbeddingSet& b, std::uint64_t seed) {
    a.validate();
    b.validate();
    int keep = std::min(a.n(), b.n());
    EmbeddingSet oa = a, ob = b;
    if (a.n() > keep) oa = take_rows(a, sample_indices(a.n(), keep, seed));
    if (b.n() > keep) ob = take_rows(b, sample_indices(b.n(), keep, seed));
    return {std::move(oa), std::move(ob)};
}

namespace {

// Eigenvalues of the sample covariance without forming a DxD matrix when
// N-1 < D: the Gram matrix Xc*Xc^T shares the nonzero spectrum.
Eigen::VectorXd covariance_eigenvalues_desc(const Eigen::MatrixXd& data) {
    const Eigen::Index n = data.rows(), d = data.cols();
    Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    Eigen::Index rank_bound = std::min<Eigen::Index>(n - 1, d);
    Eigen::MatrixXd sym;
    if (n <= d) {
        sym = centered * centered.transpose() / double(n - 1);
    } else {
        sym = centered.transpose() * centered / double(n - 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success)
        raise(Errc::internal_error, "pca: eigendecomposition failed");
    Eigen::VectorXd ev = solver.eigenvalues().reverse(); // descending
    Eigen::VectorXd out(rank_bound);
    for (Eigen::Index i = 0; i < rank_bound; ++i)
        out(i) = std::max(0.0, i < ev.size() ? ev(i) : 0.0);
    return out;
}

} // namespace

std::vector<double> pca_explained_variance(const EmbeddingSet& set) {
    set.validate();
    if (set.n() < 2)
        raise(Errc::invalid_argument, "pca: need at least two rows");
    Eigen::VectorXd ev = covariance_eigenvalues_desc(set.vectors);
    double total = ev.sum();
    if (total <= 0.0)
        raise(Errc::invalid_argument, "pca: zero total variance (all rows identical)");
    std::vector<double> cumulative(std::size_t(ev.size()));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        acc += ev(i) / total;
        cumulative[std::size_t(i)] = acc;
    }
    return cumulative;
}

int components_for(const std::vector<double>& cumulative_ratios, double threshold) {
    if (threshold <= 0.0 || threshold > 1.0)
        raise(Errc::invalid_argument, "components_for: threshold must be in (0,1]");
    for (std::size_t i = 0; i < cumulative_ratios.size(); ++i) {
        if (cumulative_ratios[i] >= threshold) return int(i) + 1;
    }
    return int(cumulative_ratios.size());
}

Eigen::MatrixXd pca_scores(const Eigen::MatrixXd& data, int k) {
    const Eigen::Index n = data.rows(), d = data.cols();
    if (k < 1 || Eigen::Index(k) > std::min(n, d))
        raise(Errc::invalid_argument, "pca_scores: bad component count");
    Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    if (n <= d) {
        // scores from the Gram matrix: score_k = sqrt(lambda_k) * u_k
        Eigen::MatrixXd gram = centered * centered.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
        Eigen::MatrixXd scores(n, k);
        for (int c = 0; c < k; ++c) {
            Eigen::Index col = n - 1 - c; // eigenvalues ascend
            double lambda = std::max(0.0, solver.eigenvalues()(col));
            scores.col(c) = solver.eigenvectors().col(col) * std::sqrt(lambda);
        }
        return scores;
    }
    Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    Eigen::MatrixXd components(d, k);
    for (int c = 0; c < k; ++c) components.col(c) = solver.eigenvectors().col(d - 1 - c);
    return centered * components;
}

namespace {

// Per-point Gaussian bandwidths matched to the target perplexity by
// binary search on precision beta = 1/(2 sigma^2).
Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& sqdist, double perplexity) {
    const Eigen::Index n = sqdist.rows();
    const double target_entropy = std::log(perplexity);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0, beta_min = -1e300, beta_max = 1e300;
        Eigen::VectorXd row(n);
        for (int iter = 0; iter < 50; ++iter) {
            double sum = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                row(j) = j == i ? 0.0 : std::exp(-beta * sqdist(i, j));
                sum += row(j);
            }
            if (sum <= 0.0) sum = 1e-300;
            double entropy = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (row(j) > 0.0) {
                    double q = row(j) / sum;
                    entropy -= q * std::log(q);
                }
            }
            double diff = entropy - target_entropy;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0) {
                beta_min = beta;
                beta = beta_max >= 1e300 ? beta * 2.0 : (beta + beta_max) / 2.0;
            } else {
                beta_max = beta;
                beta = beta_min <= -1e300 ? beta / 2.0 : (beta + beta_min) / 2.0;
            }
            row.setZero();
        }
        double sum = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            row(j) = j == i ? 0.0 : std::exp(-beta * sqdist(i, j));
            sum += row(j);
        }
        if (sum <= 0.0) sum = 1e-300;
        p.row(i) = row.transpose() / sum;
    }
    return p;
}

Eigen::MatrixXd pairwise_sqdist(const Eigen::MatrixXd& x) {
    Eigen::VectorXd norms = x.rowwise().squaredNorm();
    Eigen::MatrixXd d = norms.replicate(1, x.rows()) + norms.transpose().replicate(x.rows(), 1) -
                        2.0 * x * x.transpose();
    return d.cwiseMax(0.0);
}

double kl_divergence(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
    const Eigen::Index n = y.rows();
    Eigen::MatrixXd sq = pairwise_sqdist(y);
    double sum_q = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) sum_q += 1.0 / (1.0 + sq(i, j));
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j || p(i, j) <= 0.0) continue;
            double q = std::max(1e-12, (1.0 / (1.0 + sq(i, j))) / sum_q);
            kl += p(i, j) * std::log(p(i, j) / q);
        }
    }
    return kl;
}

} // namespace

TsneResult tsne(const EmbeddingSet& set, const TsneParams& params) {
    set.validate();
    const int n = set.n();
    if (n < 4) raise(Errc::invalid_argument, "tsne: need at least 4 points");
    if (params.perplexity <= 0.0 || params.perplexity >= (n - 1) / 3.0)
        raise(Errc::invalid_argument,
              "tsne: perplexity must be positive and below (N-1)/3 = " +
                  std::to_string((n - 1) / 3.0));
    if (params.iterations < 1) raise(Errc::invalid_argument, "tsne: need at least one iteration");

    // symmetrized affinities
    Eigen::MatrixXd cond = conditional_affinities(pairwise_sqdist(set.vectors), params.perplexity);
    Eigen::MatrixXd p = (cond + cond.transpose()) / (2.0 * n);
    p = p.cwiseMax(1e-12);

    // PCA initialization scaled so the first column has std 1e-4
    Eigen::MatrixXd y = pca_scores(set.vectors, 2);
    double col0_std = std::sqrt(y.col(0).squaredNorm() / double(n));
    if (col0_std > 0.0) {
        y *= 1e-4 / col0_std;
    } else {
        // degenerate data: deterministic seeded jitter
        std::mt19937_64 rng(params.seed);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 2; ++c) y(i, c) = (uniform_real(rng) - 0.5) * 1e-4;
    }

    const double lr = params.learning_rate > 0.0 ? params.learning_rate
                                                 : std::max(double(n) / 12.0, 50.0);
    Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);

    TsneResult result;
    for (int iter = 0; iter < params.iterations; ++iter) {
        bool exaggerated = iter < params.exaggeration_until;
        double p_scale = exaggerated ? params.early_exaggeration : 1.0;

        Eigen::MatrixXd sq = pairwise_sqdist(y);
        Eigen::MatrixXd w(n, n);
        double sum_q = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                w(i, j) = i == j ? 0.0 : 1.0 / (1.0 + sq(i, j));
                sum_q += w(i, j);
            }
        }

        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 2);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                double q = std::max(1e-12, w(i, j) / sum_q);
                double mult = (p_scale * p(i, j) - q) * w(i, j);
                grad.row(i) += 4.0 * mult * (y.row(i) - y.row(j));
            }
        }

        double momentum =
            iter < params.momentum_switch ? params.initial_momentum : params.final_momentum;
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                bool same_sign = (grad(i, c) > 0.0) == (velocity(i, c) > 0.0);
                gains(i, c) = same_sign ? std::max(0.01, gains(i, c) * 0.8)
                                        : gains(i, c) + 0.2;
                velocity(i, c) = momentum * velocity(i, c) - lr * gains(i, c) * grad(i, c);
            }
        }
        y += velocity;
        y.rowwise() -= y.colwise().mean(); // keep the layout centered

        bool post_exaggeration = !exaggerated;
        bool checkpoint = post_exaggeration && ((iter - params.exaggeration_until) %
                                                    std::max(1, params.trace_every) ==
                                                0 ||
                                                iter == params.iterations - 1);
        if (checkpoint) result.kl_trace.emplace_back(iter, kl_divergence(p, y));
    }
    result.points = std::move(y);
    return result;
}

double nearest_neighbor_purity(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
    const Eigen::Index n = points.rows();
    if (n < 2 || labels.size() != std::size_t(n))
        raise(Errc::invalid_argument, "purity: need >=2 points and one label per point");
    int same = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::max();
        Eigen::Index best_j = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            double d = (points.row(i) - points.row(j)).squaredNorm();
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        if (labels[std::size_t(i)] == labels[std::size_t(best_j)]) ++same;
    }
    return double(same) / double(n);
}

void run_diversity(const std::vector<std::string>& embedding_paths,
                   const DiversityOptions& options, const std::string& out_dir) {
    if (embedding_paths.empty())
        raise(Errc::invalid_argument, "diversity: need at least one embeddings file");
    fs::create_directories(out_dir);

    std::vector<EmbeddingSet> sets;
    for (const auto& path : embedding_paths) sets.push_back(l2_normalize(load_embeddings(path)));

    // size-match every set to the smallest
    int keep = sets.front().n();
    for (const auto& s : sets) keep = std::min(keep, s.n());
    for (auto& s : sets) {
        if (s.n() > keep) {
            EmbeddingSet matched;
            matched.label = s.label;
            auto idx = sample_indices(s.n(), keep, options.seed);
            matched = take_rows(s, idx);
            s = std::move(matched);
        }
    }

    nlohmann::json summary;
    summary["seed"] = options.seed;
    summary["matched_n"] = keep;

    // per-set intrinsic dimensionality
    for (const auto& s : sets) {
        auto cumulative = pca_explained_variance(s);
        std::string csv = "component,cumulative_explained_variance\n";
        for (std::size_t i = 0; i < cumulative.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, cumulative[i]);
            csv += buf;
        }
        write_file((fs::path(out_dir) / ("variance_" + s.label + ".csv")).string(), csv);
        nlohmann::json crossings = nlohmann::json::object();
        for (double t : options.thresholds) {
            char key[16];
            std::snprintf(key, sizeof(key), "%g", t);
            crossings[key] = components_for(cumulative, t);
        }
        summary["sets"][s.label] = {{"n", s.n()},
                                    {"dim", s.dim()},
                                    {"components_for", std::move(crossings)}};
    }

    // joint projection
    int dim = sets.front().dim();
    for (const auto& s : sets) {
        if (s.dim() != dim)
            raise(Errc::invalid_argument, "diversity: embedding dimensions differ across sets");
    }
    EmbeddingSet joint;
    joint.label = "joint";
    joint.vectors.resize(Eigen::Index(keep) * Eigen::Index(sets.size()), dim);
    std::vector<std::string> row_labels;
    std::vector<std::string> row_ids;
    Eigen::Index r = 0;
    for (const auto& s : sets) {
        for (int i = 0; i < s.n(); ++i, ++r) {
            joint.vectors.row(r) = s.vectors.row(i);
            row_labels.push_back(s.label);
            row_ids.push_back(s.ids.empty() ? "row" + std::to_string(i) : s.ids[i]);
        }
    }

    TsneParams tp = options.tsne_params;
    tp.seed = options.seed;
    if (tp.perplexity >= (joint.vectors.rows() - 1) / 3.0)
        tp.perplexity = std::max(1.0, (joint.vectors.rows() - 1) / 3.0 - 1.0);
    TsneResult projected = tsne(joint, tp);

    std::string csv = "label,id,x,y\n";
    for (Eigen::Index i = 0; i < projected.points.rows(); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", projected.points(i, 0),
                      projected.points(i, 1));
        csv += row_labels[std::size_t(i)] + "," + row_ids[std::size_t(i)] + buf;
    }
    write_file((fs::path(out_dir) / "tsne_points.csv").string(), csv);

    nlohmann::json trace = nlohmann::json::array();
    for (const auto& [it, kl] : projected.kl_trace) trace.push_back({{"iter", it}, {"kl", kl}});
    summary["tsne"] = {{"perplexity", tp.perplexity},
                       {"iterations", tp.iterations},
                       {"kl_trace", std::move(trace)}};
    write_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");
}

} // namespace reorm
