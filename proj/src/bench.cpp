#include "reorm/bench.hpp"

#include "reorm/error.hpp"
#include "reorm/png_io.hpp"
#include "reorm/util.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;

namespace reorm {

const char* entry_source_name(EntrySource s) {
    switch (s) {
    case EntrySource::public_dataset: return "public_dataset";
    case EntrySource::synthetic: return "synthetic";
    case EntrySource::copy_paste: return "copy_paste";
    }
    return "unknown";
}

EntrySource entry_source_from_name(const std::string& name) {
    if (name == "public_dataset") return EntrySource::public_dataset;
    if (name == "synthetic") return EntrySource::synthetic;
    if (name == "copy_paste") return EntrySource::copy_paste;
    raise(Errc::format_error, "unknown source: " + name);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io_error, "cannot open manifest: " + path);
    fs::path base = fs::path(path).parent_path();

    auto resolve = [&](const std::string& p) {
        fs::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    std::vector<ManifestEntry> entries;
    std::set<std::string> seen_ids;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fail = [&](const std::string& msg) {
            raise(Errc::format_error, path + ":" + std::to_string(lineno) + ": " + msg);
        };
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) fail("invalid JSON");
        ManifestEntry e;
        try {
            e.id = j.at("id").get<std::string>();
            e.input_path = resolve(j.at("input").get<std::string>());
            e.instruction = j.at("instruction").get<std::string>();
            if (j.contains("ground_truth") && !j.at("ground_truth").is_null())
                e.ground_truth_path = resolve(j.at("ground_truth").get<std::string>());
            if (j.contains("categories")) {
                for (const auto& c : j.at("categories"))
                    e.categories.push_back(edge_kind_from_name(c.get<std::string>()));
            }
            e.source = entry_source_from_name(j.at("source").get<std::string>());
        } catch (const Error& err) {
            fail(err.what());
        } catch (const nlohmann::json::exception& ex) {
            fail(ex.what());
        }
        if (e.id.empty()) fail("entry id must be nonempty");
        if (!seen_ids.insert(e.id).second) fail("duplicate entry id: " + e.id);
        if (trim(e.instruction).empty()) fail("instruction must be nonempty");
        if (!fs::exists(e.input_path)) fail("input image not found: " + e.input_path);
        if (e.ground_truth_path && !fs::exists(*e.ground_truth_path))
            fail("ground truth image not found: " + *e.ground_truth_path);
        entries.push_back(std::move(e));
    }
    return entries;
}

CategoryStats category_stats(const std::vector<ManifestEntry>& manifest) {
    CategoryStats stats;
    for (const auto& e : manifest) {
        std::set<EdgeKind> kinds(e.categories.begin(), e.categories.end());
        for (EdgeKind k : kinds) ++stats.per_category[k];
        ++stats.per_source[e.source];
    }
    return stats;
}

namespace {

struct Accumulator {
    double sum = 0.0;
    int count = 0;
    void add(double v) {
        sum += v;
        ++count;
    }
    MetricAggregate aggregate() const {
        return {count > 0 ? sum / count : 0.0, count};
    }
};

struct MetricAccumulators {
    Accumulator dino, lpips, psnr, ssim;

    void add(const MetricSet& m) {
        if (m.dino) dino.add(*m.dino);
        if (m.lpips) lpips.add(*m.lpips);
        psnr.add(m.psnr);
        ssim.add(m.ssim);
    }

    std::map<std::string, MetricAggregate> by_name() const {
        std::map<std::string, MetricAggregate> out;
        if (dino.count) out["dino"] = dino.aggregate();
        if (lpips.count) out["lpips"] = lpips.aggregate();
        out["psnr"] = psnr.aggregate();
        out["ssim"] = ssim.aggregate();
        return out;
    }
};

nlohmann::json aggregate_json(const MetricAggregate& a) {
    return {{"mean", a.mean}, {"count", a.count}};
}

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

} // namespace

std::string format_runtime_split(double remote_s, double local_s) {
    return format_fixed(remote_s, 2) + "(API) + " + format_fixed(local_s, 2);
}

bool Report::any_failed() const {
    return std::any_of(entries.begin(), entries.end(),
                       [](const EntryResult& e) { return !e.ok; });
}

nlohmann::json Report::to_json() const {
    nlohmann::json j;
    j["schema"] = "reorm-report/1";
    j["label"] = label;
    j["config"] = config_echo;

    int evaluated = 0, failed = 0, no_gt = 0;
    nlohmann::json entry_arr = nlohmann::json::array();
    nlohmann::json entry_timing = nlohmann::json::object();
    for (const auto& e : entries) {
        nlohmann::json je{{"id", e.id}, {"ok", e.ok}};
        if (!e.ok) {
            ++failed;
            je["error"] = e.error;
        } else if (!e.has_ground_truth) {
            ++no_gt;
        }
        if (e.metrics) {
            ++evaluated;
            nlohmann::json jm{{"psnr", e.metrics->psnr}, {"ssim", e.metrics->ssim}};
            if (e.metrics->dino) jm["dino"] = *e.metrics->dino;
            if (e.metrics->lpips) jm["lpips"] = *e.metrics->lpips;
            je["metrics"] = std::move(jm);
        }
        entry_arr.push_back(std::move(je));
        entry_timing[e.id] = {{"remote_s", e.remote_s}, {"local_s", e.local_s}};
    }
    j["counts"] = {{"entries", int(entries.size())},
                   {"evaluated", evaluated},
                   {"failed", failed},
                   {"no_ground_truth", no_gt}};
    j["entries"] = std::move(entry_arr);

    nlohmann::json agg;
    agg["psnr"] = aggregate_json(psnr);
    agg["ssim"] = aggregate_json(ssim);
    agg["dino"] = dino ? aggregate_json(*dino) : nlohmann::json(nullptr);
    agg["lpips"] = lpips ? aggregate_json(*lpips) : nlohmann::json(nullptr);
    j["aggregate"] = std::move(agg);

    auto breakdown_json = [](const std::map<std::string, std::map<std::string, MetricAggregate>>& b) {
        nlohmann::json out = nlohmann::json::object();
        for (const auto& [group, metrics] : b) {
            nlohmann::json jm = nlohmann::json::object();
            for (const auto& [name, a] : metrics) jm[name] = aggregate_json(a);
            out[group] = std::move(jm);
        }
        return out;
    };
    j["by_category"] = breakdown_json(by_category);
    j["by_source"] = breakdown_json(by_source);

    nlohmann::json cat = nlohmann::json::object(), src = nlohmann::json::object();
    for (const auto& [k, n] : dataset.per_category) cat[edge_kind_name(k)] = n;
    for (const auto& [s, n] : dataset.per_source) src[entry_source_name(s)] = n;
    j["dataset"] = {{"per_category", std::move(cat)}, {"per_source", std::move(src)}};

    j["metadata"] = {{"psnr_cap_db", kPsnrCapDb},
                     {"ssim_variant", "luma-bt601, 11x11 gaussian sigma=1.5, K1=0.01, K2=0.03"},
                     {"provider_preprocessing", "delegated to the embed/score providers"}};

    // everything measurement-dependent lives here so replayed runs are
    // byte-comparable after dropping this one field
    j["timing"] = {{"generated_at", now_rfc3339()},
                   {"runtime_remote_mean_s", runtime_remote_mean_s},
                   {"runtime_local_mean_s", runtime_local_mean_s},
                   {"runtime_count", runtime_count},
                   {"entries", std::move(entry_timing)}};
    return j;
}

std::string Report::to_markdown() const {
    std::string md;
    md += "# Benchmark report: " + label + "\n\n";

    md += "| Method | DINO ↑ | LPIPS ↓ | PSNR ↑ | SSIM ↑ | Runtime (s/img) |\n";
    md += "|---|---|---|---|---|---|\n";
    md += "| " + label + " | ";
    md += (dino ? format_fixed(dino->mean, 3) : std::string("--")) + " | ";
    md += (lpips ? format_fixed(lpips->mean, 3) : std::string("--")) + " | ";
    md += format_fixed(psnr.mean, 3) + " | ";
    md += format_fixed(ssim.mean, 3) + " | ";
    md += format_runtime_split(runtime_remote_mean_s, runtime_local_mean_s) + " |\n\n";

    int failed = 0;
    for (const auto& e : entries)
        if (!e.ok) ++failed;
    md += "Entries: " + std::to_string(entries.size()) + ", scored: " +
          std::to_string(psnr.count) + ", failed: " + std::to_string(failed) + "\n\n";

    auto breakdown_table = [&](const char* title,
                               const std::map<std::string, std::map<std::string, MetricAggregate>>& b) {
        if (b.empty()) return;
        md += "## " + std::string(title) + "\n\n";
        md += "| Group | N | DINO ↑ | LPIPS ↓ | PSNR ↑ | SSIM ↑ |\n|---|---|---|---|---|---|\n";
        for (const auto& [group, metrics] : b) {
            auto cell = [&](const char* name) -> std::string {
                auto it = metrics.find(name);
                return it == metrics.end() ? "--" : format_fixed(it->second.mean, 3);
            };
            int n = metrics.count("psnr") ? metrics.at("psnr").count : 0;
            md += "| " + group + " | " + std::to_string(n) + " | " + cell("dino") + " | " +
                  cell("lpips") + " | " + cell("psnr") + " | " + cell("ssim") + " |\n";
        }
        md += "\n";
    };
    breakdown_table("By interaction category", by_category);
    breakdown_table("By source", by_source);

    md += "## Dataset\n\n| Category | Count |\n|---|---|\n";
    for (const auto& [k, n] : dataset.per_category)
        md += "| " + std::string(edge_kind_name(k)) + " | " + std::to_string(n) + " |\n";
    md += "\n| Source | Count |\n|---|---|\n";
    for (const auto& [s, n] : dataset.per_source)
        md += "| " + std::string(entry_source_name(s)) + " | " + std::to_string(n) + " |\n";

    if (failed > 0) {
        md += "\n## Failures\n\n";
        for (const auto& e : entries) {
            if (!e.ok) md += "- `" + e.id + "`: " + e.error + "\n";
        }
    }
    return md;
}

Report run_bench(const std::vector<ManifestEntry>& manifest, const BackendSet& backends,
                 const PipelineConfig& raw_cfg, const PromptLibrary& prompts,
                 const BenchOptions& options) {
    PipelineConfig cfg = raw_cfg;
    cfg.normalize();

    Report report;
    report.label = options.label.empty() ? pipeline_mode_name(cfg.mode) : options.label;
    report.config_echo = cfg.to_json();
    report.dataset = category_stats(manifest);
    report.entries.resize(manifest.size());

    if (options.save_artifacts && !options.out_dir.empty())
        fs::create_directories(fs::path(options.out_dir) / "entries");

    // bounded parallelism; results land at the entry's manifest position
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= manifest.size()) return;
            const ManifestEntry& entry = manifest[i];
            EntryResult& result = report.entries[i];
            result.id = entry.id;
            result.has_ground_truth = entry.ground_truth_path.has_value();
            try {
                Image input = load_image_png(entry.input_path);
                RunRecord record = run_pipeline(input, entry.instruction, backends, cfg, prompts);
                result.remote_s = record.total_remote_s();
                result.local_s = record.total_local_s();

                if (entry.ground_truth_path) {
                    Image gt = load_image_png(*entry.ground_truth_path);
                    MetricSet m;
                    m.psnr = psnr(record.final_image, gt);
                    m.ssim = ssim(record.final_image, gt);
                    if (backends.embedder) {
                        try {
                            auto e1 = backends.embedder->embed(record.final_image);
                            auto e2 = backends.embedder->embed(gt);
                            m.dino = embed_cosine(e1, e2);
                        } catch (const Error&) {
                            // provider down: metric stays absent
                        }
                    }
                    if (backends.scorer) {
                        try {
                            m.lpips = pair_score(record.final_image, gt, *backends.scorer);
                        } catch (const Error&) {
                        }
                    }
                    result.metrics = m;
                }

                if (options.save_artifacts && !options.out_dir.empty()) {
                    fs::path dir = fs::path(options.out_dir) / "entries" / entry.id;
                    fs::create_directories(dir);
                    save_png((dir / "edited.png").string(), record.final_image);
                    if (!(record.first_pass == record.final_image))
                        save_png((dir / "first_pass.png").string(), record.first_pass);
                    write_file((dir / "record.json").string(),
                               record.to_json(report.config_echo).dump(2) + "\n");
                }
                result.ok = true;
            } catch (const Error& e) {
                result.error = std::string(errc_name(e.code())) + ": " + e.what();
            } catch (const std::exception& e) {
                result.error = std::string("unexpected: ") + e.what();
            }
        }
    };
    int n_threads = std::min<int>(cfg.max_parallel_requests, int(manifest.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // aggregation in manifest order
    MetricAccumulators overall;
    std::map<std::string, MetricAccumulators> cat_acc, src_acc;
    Accumulator remote, local;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const EntryResult& r = report.entries[i];
        if (!r.ok) continue;
        remote.add(r.remote_s);
        local.add(r.local_s);
        if (!r.metrics) continue;
        overall.add(*r.metrics);
        std::set<EdgeKind> kinds(manifest[i].categories.begin(), manifest[i].categories.end());
        for (EdgeKind k : kinds) cat_acc[edge_kind_name(k)].add(*r.metrics);
        src_acc[entry_source_name(manifest[i].source)].add(*r.metrics);
    }
    report.psnr = overall.psnr.aggregate();
    report.ssim = overall.ssim.aggregate();
    if (overall.dino.count) report.dino = overall.dino.aggregate();
    if (overall.lpips.count) report.lpips = overall.lpips.aggregate();
    report.runtime_remote_mean_s = remote.aggregate().mean;
    report.runtime_local_mean_s = local.aggregate().mean;
    report.runtime_count = remote.count;
    for (const auto& [name, acc] : cat_acc) report.by_category[name] = acc.by_name();
    for (const auto& [name, acc] : src_acc) report.by_source[name] = acc.by_name();

    if (options.save_artifacts && !options.out_dir.empty()) {
        write_file((fs::path(options.out_dir) / "report.json").string(),
                   report.to_json().dump(2) + "\n");
        write_file((fs::path(options.out_dir) / "report.md").string(), report.to_markdown());
    }
    return report;
}

} // namespace reorm
