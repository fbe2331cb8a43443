#include "reorm/http_backends.hpp"

#include "reorm/error.hpp"
#include "reorm/fixtures.hpp"
#include "reorm/png_io.hpp"
#include "reorm/util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <thread>

namespace reorm {

namespace {

struct SplitUrl {
    std::string base; // scheme://host:port
    std::string path; // /route
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        raise(Errc::config_error, "endpoint URL needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

// POSTs a JSON body with bounded retries and exponential backoff on
// transport failures, 429, and 5xx. The body is constructed once by the
// caller, so retries are byte-identical.
class JsonHttp {
public:
    JsonHttp(std::string url, std::string api_key, double timeout_s, int max_retries,
             int backoff_base_ms)
        : url_(split_url(url)), api_key_(std::move(api_key)), timeout_s_(timeout_s),
          max_retries_(max_retries), backoff_base_ms_(backoff_base_ms) {}

    nlohmann::json post(const std::string& body) const {
        std::string last_error;
        for (int attempt = 0; attempt <= max_retries_; ++attempt) {
            if (attempt > 0) {
                auto delay = std::chrono::milliseconds(backoff_base_ms_ << (attempt - 1));
                std::this_thread::sleep_for(std::min(delay, std::chrono::milliseconds(4000)));
            }
            httplib::Client client(url_.base);
            client.set_connection_timeout(std::chrono::duration<double>(timeout_s_));
            client.set_read_timeout(std::chrono::duration<double>(timeout_s_));
            client.set_write_timeout(std::chrono::duration<double>(timeout_s_));
            httplib::Headers headers;
            if (!api_key_.empty())
                headers.emplace("Authorization", "Bearer " + api_key_);
            auto res = client.Post(url_.path, headers, body, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                raise(Errc::transport_error,
                      url_.base + url_.path + " returned HTTP " + std::to_string(res->status) +
                          ": " + res->body.substr(0, 200));
            nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
            if (j.is_discarded())
                raise(Errc::transport_error, url_.base + url_.path + " returned invalid JSON");
            return j;
        }
        raise(Errc::transport_error, url_.base + url_.path + " failed after " +
                                         std::to_string(max_retries_ + 1) +
                                         " attempts; last error: " + last_error);
    }

private:
    SplitUrl url_;
    std::string api_key_;
    double timeout_s_;
    int max_retries_;
    int backoff_base_ms_;
};

std::string image_data_url(const Image& image) {
    return "data:image/png;base64," + base64_encode(encode_png(image));
}

// Chat-completions client serving both reasoner roles.
class ChatReasoner : public VisionReasoner, public TextReasoner {
public:
    ChatReasoner(JsonHttp http, std::string model, Locality locality)
        : http_(std::move(http)), model_(std::move(model)), locality_(locality) {}

    std::string reason(const PromptBundle& bundle, const Image* image) override {
        if (bundle.attach_image && !image)
            raise(Errc::invalid_argument, "image-conditioned bundle without an image");
        nlohmann::json user_content = nlohmann::json::array();
        user_content.push_back({{"type", "text"}, {"text", bundle.user_text}});
        if (image) {
            user_content.push_back(
                {{"type", "image_url"}, {"image_url", {{"url", image_data_url(*image)}}}});
        }
        nlohmann::json body{
            {"model", model_},
            {"messages",
             {{{"role", "system"},
               {"content", {{{"type", "text"}, {"text", bundle.system_text}}}}},
              {{"role", "user"}, {"content", user_content}}}}};
        nlohmann::json res = http_.post(body.dump());
        try {
            return res.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            raise(Errc::transport_error, "chat response lacks choices[0].message.content");
        }
    }

    std::string reason(const PromptBundle& bundle) override {
        if (bundle.attach_image)
            raise(Errc::invalid_argument, "text reasoner got an image-conditioned bundle");
        return reason(bundle, nullptr);
    }

    Locality locality() const override { return locality_; }

private:
    JsonHttp http_;
    std::string model_;
    Locality locality_;
};

class HttpSegmenter : public Segmenter {
public:
    HttpSegmenter(JsonHttp http, Locality locality)
        : http_(std::move(http)), locality_(locality) {}

    SegmentResult segment(const Image& image, const std::vector<std::string>& labels) override {
        if (labels.empty()) raise(Errc::invalid_argument, "segment: labels must be nonempty");
        nlohmann::json body{{"image_b64", base64_encode(encode_png(image))}, {"labels", labels}};
        nlohmann::json res = http_.post(body.dump());
        try {
            return segment_result_from_json(res, image.width(), image.height());
        } catch (const nlohmann::json::exception&) {
            raise(Errc::transport_error, "segment response schema mismatch");
        }
    }

    Locality locality() const override { return locality_; }

private:
    JsonHttp http_;
    Locality locality_;
};

class HttpRemover : public Remover {
public:
    HttpRemover(JsonHttp http, Locality locality) : http_(std::move(http)), locality_(locality) {}

    Image remove(const Image& image, const Mask& mask) override {
        if (mask.width() != image.width() || mask.height() != image.height())
            raise(Errc::dimension_mismatch, "remove: mask does not match image");
        nlohmann::json body{{"image_b64", base64_encode(encode_png(image))},
                            {"mask_b64", base64_encode(encode_png(mask))}};
        nlohmann::json res = http_.post(body.dump());
        try {
            return decode_image_png(base64_decode(res.at("image_b64").get<std::string>()));
        } catch (const nlohmann::json::exception&) {
            raise(Errc::transport_error, "remove response schema mismatch");
        }
    }

    Locality locality() const override { return locality_; }

private:
    JsonHttp http_;
    Locality locality_;
};

class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(JsonHttp http, Locality locality) : http_(std::move(http)), locality_(locality) {}

    std::vector<double> embed(const Image& image) override {
        nlohmann::json body{{"image_b64", base64_encode(encode_png(image))}};
        nlohmann::json res = http_.post(body.dump());
        try {
            return res.at("vector").get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
            raise(Errc::transport_error, "embed response schema mismatch");
        }
    }

    Locality locality() const override { return locality_; }

private:
    JsonHttp http_;
    Locality locality_;
};

class HttpScorer : public PairScorer {
public:
    HttpScorer(JsonHttp http, Locality locality) : http_(std::move(http)), locality_(locality) {}

    double score_pair(const Image& a, const Image& b) override {
        nlohmann::json body{{"image_a_b64", base64_encode(encode_png(a))},
                            {"image_b_b64", base64_encode(encode_png(b))}};
        nlohmann::json res = http_.post(body.dump());
        try {
            return res.at("score").get<double>();
        } catch (const nlohmann::json::exception&) {
            raise(Errc::transport_error, "score response schema mismatch");
        }
    }

    Locality locality() const override { return locality_; }

private:
    JsonHttp http_;
    Locality locality_;
};

} // namespace

void HttpBackendConfig::apply_env_overrides() {
    auto env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? v : "";
    };
    if (auto v = env("REORM_API_KEY"); !v.empty()) api_key = v;
    if (auto v = env("REORM_CHAT_URL"); !v.empty()) chat_url = v;
    if (auto v = env("REORM_TEXT_URL"); !v.empty()) text_url = v;
    if (auto v = env("REORM_SEGMENT_URL"); !v.empty()) segment_url = v;
    if (auto v = env("REORM_REMOVE_URL"); !v.empty()) remove_url = v;
    if (auto v = env("REORM_CORRECTIVE_REMOVE_URL"); !v.empty()) corrective_remove_url = v;
    if (auto v = env("REORM_EMBED_URL"); !v.empty()) embed_url = v;
    if (auto v = env("REORM_SCORE_URL"); !v.empty()) score_url = v;
    if (auto v = env("REORM_TIMEOUT_S"); !v.empty()) timeout_s = std::stod(v);
    if (auto v = env("REORM_MAX_RETRIES"); !v.empty()) max_retries = std::stoi(v);
}

BackendSet make_http_backends(const HttpBackendConfig& cfg) {
    if (cfg.chat_url.empty())
        raise(Errc::config_error, "http backends: chat_url is required");
    if (cfg.segment_url.empty() || cfg.remove_url.empty())
        raise(Errc::config_error, "http backends: segment_url and remove_url are required");

    auto http = [&](const std::string& url) {
        return JsonHttp(url, cfg.api_key, cfg.timeout_s, cfg.max_retries, cfg.backoff_base_ms);
    };

    BackendSet set;
    auto chat = std::make_shared<ChatReasoner>(http(cfg.chat_url), cfg.chat_model,
                                               cfg.chat_locality);
    set.vision_reasoner = chat;
    if (cfg.text_url.empty()) {
        set.text_reasoner = chat;
    } else {
        set.text_reasoner = std::make_shared<ChatReasoner>(http(cfg.text_url), cfg.text_model,
                                                           cfg.text_locality);
    }
    set.segmenter = std::make_shared<HttpSegmenter>(http(cfg.segment_url), cfg.segment_locality);
    set.remover = std::make_shared<HttpRemover>(http(cfg.remove_url), cfg.remove_locality);
    if (!cfg.corrective_remove_url.empty())
        set.corrective_remover =
            std::make_shared<HttpRemover>(http(cfg.corrective_remove_url), cfg.remove_locality);
    if (!cfg.embed_url.empty())
        set.embedder = std::make_shared<HttpEmbedder>(http(cfg.embed_url), Locality::remote);
    if (!cfg.score_url.empty())
        set.scorer = std::make_shared<HttpScorer>(http(cfg.score_url), Locality::remote);
    return set;
}

} // namespace reorm
