#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "reorm/diversity.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>

using namespace reorm;
using reorm::test::TempDir;

namespace {

EmbeddingSet make_set(const std::vector<std::vector<double>>& rows,
                      const std::string& label = "test") {
    EmbeddingSet set;
    set.label = label;
    set.vectors.resize(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            set.vectors(Eigen::Index(i), Eigen::Index(k)) = rows[i][k];
    for (std::size_t i = 0; i < rows.size(); ++i) set.ids.push_back("r" + std::to_string(i));
    return set;
}

EmbeddingSet gaussian_set(int n, int d, std::uint64_t seed, double spread = 1.0,
                          const std::vector<double>& center = {}) {
    std::mt19937_64 rng(seed);
    EmbeddingSet set;
    set.label = "gauss";
    set.vectors.resize(n, d);
    auto gauss = [&rng] {
        // Box-Muller keeps the draw sequence under our control
        double u1 = std::max(1e-12, uniform_real(rng));
        double u2 = uniform_real(rng);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    };
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            double c = k < int(center.size()) ? center[k] : 0.0;
            set.vectors(i, k) = c + spread * gauss();
        }
        set.ids.push_back("g" + std::to_string(i));
    }
    return set;
}

// 2x2 symmetric eigensolve by the quadratic formula, independent of Eigen
std::pair<double, double> eig2x2(double a, double b, double c) {
    // matrix [[a, b], [b, c]]
    double tr = a + c, det = a * c - b * b;
    double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    return {tr / 2.0 + disc, tr / 2.0 - disc};
}

// Data matrix whose sample covariance has exactly the given spectrum:
// orthonormal mean-zero score columns scaled to (N-1)*lambda, mapped
// through orthonormal directions.
Eigen::MatrixXd engineered_data(int n, int d, const std::vector<double>& spectrum,
                                std::uint64_t seed, int stride) {
    const int r = int(spectrum.size());
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd scores(n, r);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < r; ++k) scores(i, k) = uniform_real(rng) - 0.5;
    scores.rowwise() -= scores.colwise().mean();
    for (int c = 0; c < r; ++c) {
        for (int prev = 0; prev < c; ++prev)
            scores.col(c) -= scores.col(prev).dot(scores.col(c)) * scores.col(prev);
        scores.col(c).normalize();
    }
    for (int c = 0; c < r; ++c) scores.col(c) *= std::sqrt((n - 1) * spectrum[c]);
    Eigen::MatrixXd directions = Eigen::MatrixXd::Zero(d, r);
    for (int c = 0; c < r; ++c) directions(c * stride + 1, c) = 1.0;
    return scores * directions.transpose();
}

} // namespace

TEST_CASE("l2_normalize") {
    SUBCASE("row (3,4) becomes (0.6, 0.8); unit rows unchanged") {
        EmbeddingSet s = make_set({{3, 4}, {1, 0}});
        EmbeddingSet n = l2_normalize(s);
        CHECK(n.vectors(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(n.vectors(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
        CHECK(n.vectors(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("zero row is an error naming the row") {
        EmbeddingSet s = make_set({{1, 2}, {0, 0}});
        try {
            l2_normalize(s);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("row 1") != std::string::npos);
        }
    }
    SUBCASE("idempotent and cosine-preserving") {
        EmbeddingSet s = gaussian_set(12, 6, 5);
        EmbeddingSet n1 = l2_normalize(s);
        EmbeddingSet n2 = l2_normalize(n1);
        CHECK((n1.vectors - n2.vectors).cwiseAbs().maxCoeff() < 1e-12);
        for (int i = 0; i < s.n(); ++i) {
            for (int j = i + 1; j < s.n(); ++j) {
                double before = s.vectors.row(i).dot(s.vectors.row(j)) /
                                (s.vectors.row(i).norm() * s.vectors.row(j).norm());
                double after = n1.vectors.row(i).dot(n1.vectors.row(j));
                CHECK(after == doctest::Approx(before).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("subsample_match") {
    SUBCASE("equal sizes pass through untouched") {
        EmbeddingSet a = gaussian_set(10, 4, 1);
        EmbeddingSet b = gaussian_set(10, 4, 2);
        auto [oa, ob] = subsample_match(a, b, 7);
        CHECK(oa.vectors == a.vectors);
        CHECK(ob.vectors == b.vectors);
    }
    SUBCASE("larger set shrinks to min, deterministically per seed") {
        EmbeddingSet a = gaussian_set(100, 4, 3);
        EmbeddingSet b = gaussian_set(40, 4, 4);
        auto [oa1, ob1] = subsample_match(a, b, 9);
        auto [oa2, ob2] = subsample_match(a, b, 9);
        CHECK(oa1.n() == 40);
        CHECK(ob1.n() == 40);
        CHECK(oa1.vectors == oa2.vectors);
        auto [oa3, _] = subsample_match(a, b, 10);
        CHECK(oa1.vectors != oa3.vectors); // different seed, different pick
    }
    SUBCASE("selection matches an independent seeded shuffle-prefix oracle") {
        EmbeddingSet a = gaussian_set(30, 3, 8);
        EmbeddingSet b = gaussian_set(12, 3, 9);
        auto [oa, ob] = subsample_match(a, b, 123);

        // reference: Fisher-Yates with the same engine contract, then
        // sorted prefix
        std::vector<int> idx(30);
        for (int i = 0; i < 30; ++i) idx[i] = i;
        std::mt19937_64 rng(123);
        for (int i = 29; i > 0; --i) {
            int j = int(bounded_uniform(rng, std::uint64_t(i + 1)));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(12);
        std::sort(idx.begin(), idx.end());
        for (int r = 0; r < 12; ++r) {
            CHECK(oa.vectors.row(r) == a.vectors.row(idx[r]));
            CHECK(oa.ids[r] == a.ids[idx[r]]);
        }
    }
}

TEST_CASE("pca_explained_variance") {
    SUBCASE("hand case: (1,0),(-1,0),(0,2),(0,-2) gives cumulative (0.8, 1.0)") {
        EmbeddingSet s = make_set({{1, 0}, {-1, 0}, {0, 2}, {0, -2}});
        auto cumulative = pca_explained_variance(s);
        REQUIRE(cumulative.size() == 2);
        CHECK(cumulative[0] == doctest::Approx(0.8).epsilon(1e-9));
        CHECK(cumulative[1] == doctest::Approx(1.0).epsilon(1e-9));

        // independent 2x2 eigensolve of the sample covariance
        double cxx = (1 + 1 + 0 + 0) / 3.0, cyy = (0 + 0 + 4 + 4) / 3.0;
        auto [l1, l2] = eig2x2(cxx, 0.0, cyy);
        CHECK(cumulative[0] == doctest::Approx(l1 / (l1 + l2)).epsilon(1e-9));
    }
    SUBCASE("rank-1 data explains everything with one component") {
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 6; ++i)
            rows.push_back({1.0 + i * 0.5, 2.0 + i * 1.0, 3.0 + i * 1.5});
        auto cumulative = pca_explained_variance(make_set(rows));
        CHECK(cumulative[0] == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("nondecreasing, ending at 1") {
        EmbeddingSet s = gaussian_set(20, 8, 11);
        auto cumulative = pca_explained_variance(s);
        CHECK(cumulative.size() == 8);
        for (std::size_t i = 1; i < cumulative.size(); ++i)
            CHECK(cumulative[i] >= cumulative[i - 1] - 1e-12);
        CHECK(cumulative.back() == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("wide data: length is N-1") {
        EmbeddingSet s = gaussian_set(5, 64, 12);
        CHECK(pca_explained_variance(s).size() == 4);
    }
    SUBCASE("identical rows are degenerate") {
        EmbeddingSet s = make_set({{1, 2}, {1, 2}, {1, 2}});
        CHECK_THROWS_AS(pca_explained_variance(s), Error);
    }
    SUBCASE("invariant under orthogonal rotation") {
        EmbeddingSet s = gaussian_set(40, 16, 13);
        auto base = pca_explained_variance(s);

        // random orthogonal matrix via Gram-Schmidt on a seeded matrix
        std::mt19937_64 rng(99);
        Eigen::MatrixXd q(16, 16);
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j < 16; ++j) q(i, j) = uniform_real(rng) - 0.5;
        for (int c = 0; c < 16; ++c) {
            for (int prev = 0; prev < c; ++prev)
                q.col(c) -= q.col(prev).dot(q.col(c)) * q.col(prev);
            q.col(c).normalize();
        }
        EmbeddingSet rotated = s;
        rotated.vectors = s.vectors * q;
        auto rot = pca_explained_variance(rotated);
        REQUIRE(rot.size() == base.size());
        for (std::size_t i = 0; i < base.size(); ++i)
            CHECK(rot[i] == doctest::Approx(base[i]).epsilon(1e-9));
    }
}

TEST_CASE("components_for") {
    std::vector<double> cumulative{0.8, 1.0};
    CHECK(components_for(cumulative, 0.9) == 2);
    CHECK(components_for(cumulative, 0.5) == 1);
    CHECK_THROWS_AS(components_for(cumulative, 0.0), Error);

    SUBCASE("engineered spectrum in 512 dimensions") {
        const int n = 24, d = 512;
        std::vector<double> spectrum{8, 4, 2, 1, 0.5, 0.25, 0.125, 0.0625};
        const int r = int(spectrum.size());

        EmbeddingSet s;
        s.label = "engineered";
        s.vectors = engineered_data(n, d, spectrum, 31, 7);
        for (int i = 0; i < n; ++i) s.ids.push_back("e" + std::to_string(i));

        auto cum = pca_explained_variance(s);
        double total = 0;
        for (double v : spectrum) total += v;
        // analytic crossing counts from the spectrum itself
        for (double threshold : {0.5, 0.9, 0.99}) {
            double acc = 0;
            int expected = 0;
            for (int k = 0; k < r; ++k) {
                acc += spectrum[k] / total;
                if (acc >= threshold) {
                    expected = k + 1;
                    break;
                }
            }
            CHECK(components_for(cum, threshold) == expected);
        }
    }
}

TEST_CASE("tsne") {
    SUBCASE("four well-separated points stay distinct") {
        EmbeddingSet s = make_set({{10, 0, 0, 0}, {0, 10, 0, 0}, {0, 0, 10, 0}, {0, 0, 0, 10}});
        TsneParams p;
        p.perplexity = 0.9; // must stay below (N-1)/3
        p.iterations = 300;
        p.exaggeration_until = 100;
        TsneResult r = tsne(s, p);
        REQUIRE(r.points.rows() == 4);
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                CHECK((r.points.row(i) - r.points.row(j)).norm() > 1e-9);
    }
    SUBCASE("infeasible perplexity is rejected") {
        EmbeddingSet s = gaussian_set(10, 4, 21);
        TsneParams p;
        p.perplexity = 3.0; // (10-1)/3 = 3 is the open bound
        CHECK_THROWS_AS(tsne(s, p), Error);
    }
    SUBCASE("two distant clusters project to pure neighborhoods") {
        // centers 10 sigma apart in 8 dimensions
        EmbeddingSet a = gaussian_set(20, 8, 31, 1.0, {0, 0, 0, 0, 0, 0, 0, 0});
        EmbeddingSet b = gaussian_set(20, 8, 32, 1.0, {10, 0, 0, 0, 0, 0, 0, 0});
        EmbeddingSet joint;
        joint.label = "joint";
        joint.vectors.resize(40, 8);
        joint.vectors.topRows(20) = a.vectors;
        joint.vectors.bottomRows(20) = b.vectors;
        for (int i = 0; i < 40; ++i) joint.ids.push_back("j" + std::to_string(i));

        TsneParams p;
        p.perplexity = 10.0;
        p.iterations = 600;
        TsneResult r = tsne(joint, p);
        std::vector<int> labels(40, 0);
        for (int i = 20; i < 40; ++i) labels[i] = 1;
        CHECK(nearest_neighbor_purity(r.points, labels) >= 0.95);

        SUBCASE("KL trace is recorded post-exaggeration and never increases") {
            REQUIRE(r.kl_trace.size() >= 2);
            CHECK(r.kl_trace.front().first == p.exaggeration_until);
            CHECK(r.kl_trace.back().first == p.iterations - 1);
            for (std::size_t i = 1; i < r.kl_trace.size(); ++i)
                CHECK(r.kl_trace[i].second <= r.kl_trace[i - 1].second + 1e-12);
        }
        SUBCASE("bit-deterministic for identical inputs and params") {
            TsneResult r2 = tsne(joint, p);
            CHECK(r.points == r2.points);
            CHECK(r.kl_trace == r2.kl_trace);
        }
    }
}

TEST_CASE("embedding file formats") {
    TempDir tmp;
    SUBCASE("jsonl with matching sidecar loads; mismatch fails") {
        std::string path = tmp.file("a.jsonl");
        std::string content = "{\"id\": \"x\", \"vector\": [1.0, 2.0]}\n"
                              "{\"id\": \"y\", \"vector\": [3.0, 4.0]}\n";
        write_file(path, content);
        EmbeddingSet s = load_embeddings(path);
        CHECK(s.n() == 2);
        CHECK(s.label == "a");
        CHECK(s.vectors(1, 1) == 4.0);

        write_file(path + ".sha256", sha256_hex(content) + "  a.jsonl\n");
        CHECK(load_embeddings(path).n() == 2);

        write_file(path + ".sha256", std::string(64, '0') + "\n");
        CHECK_THROWS_AS(load_embeddings(path), Error);
    }
    SUBCASE("ragged vectors fail with the line number") {
        std::string path = tmp.file("b.jsonl");
        write_file(path, "{\"id\": \"x\", \"vector\": [1.0, 2.0]}\n"
                         "{\"id\": \"y\", \"vector\": [3.0]}\n");
        try {
            load_embeddings(path);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find(":2:") != std::string::npos);
        }
    }
    SUBCASE("binary round trip, checksum enforced") {
        EmbeddingSet s = gaussian_set(7, 5, 41);
        std::string path = tmp.file("m.emb");
        save_embeddings_binary(path, s);
        EmbeddingSet back = load_embeddings(path);
        CHECK(back.n() == 7);
        CHECK(back.dim() == 5);
        // float32 storage: compare at float precision
        CHECK((back.vectors - s.vectors).cwiseAbs().maxCoeff() < 1e-6);

        auto bytes = read_file_bytes(path);
        bytes[20] ^= 0x01; // flip one payload bit
        write_file_bytes(path, bytes);
        CHECK_THROWS_AS(load_embeddings(path), Error);
    }
}

TEST_CASE("run_diversity writes plot-ready outputs") {
    TempDir tmp;
    // two labeled sets of different sizes
    EmbeddingSet a = gaussian_set(30, 6, 51, 1.0, {0, 0, 0, 0, 0, 0});
    EmbeddingSet b = gaussian_set(18, 6, 52, 1.0, {8, 0, 0, 0, 0, 0});
    auto dump = [&](const EmbeddingSet& s, const std::string& name) {
        std::ofstream out(tmp.file(name));
        for (int i = 0; i < s.n(); ++i) {
            nlohmann::json j{{"id", s.ids[i]}, {"vector", std::vector<double>()}};
            std::vector<double> v(s.dim());
            for (int k = 0; k < s.dim(); ++k) v[k] = s.vectors(i, k);
            j["vector"] = v;
            out << j.dump() << "\n";
        }
    };
    dump(a, "ours.jsonl");
    dump(b, "baseline.jsonl");

    DiversityOptions options;
    options.seed = 3;
    options.tsne_params.iterations = 400;
    options.tsne_params.perplexity = 8.0;
    run_diversity({tmp.file("ours.jsonl"), tmp.file("baseline.jsonl")}, options,
                  tmp.file("out"));

    CHECK(std::filesystem::exists(tmp.file("out/tsne_points.csv")));
    CHECK(std::filesystem::exists(tmp.file("out/variance_ours.csv")));
    CHECK(std::filesystem::exists(tmp.file("out/variance_baseline.csv")));
    nlohmann::json summary = nlohmann::json::parse(read_file(tmp.file("out/summary.json")));
    CHECK(summary.at("matched_n") == 18);
    CHECK(summary.at("sets").at("ours").at("n") == 18);
    CHECK(summary.at("sets").at("ours").at("components_for").contains("0.9"));

    // 36 points, one per row, labeled by set
    std::string csv = read_file(tmp.file("out/tsne_points.csv"));
    int lines = int(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(lines == 1 + 36);
    CHECK(csv.find("ours,") != std::string::npos);
    CHECK(csv.find("baseline,") != std::string::npos);

    SUBCASE("byte-identical on a second run") {
        run_diversity({tmp.file("ours.jsonl"), tmp.file("baseline.jsonl")}, options,
                      tmp.file("out2"));
        CHECK(read_file(tmp.file("out2/tsne_points.csv")) == csv);
    }
}
