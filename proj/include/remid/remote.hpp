#pragma once

// OpenAI-compatible completions client behind the provider contract. Scoring
// posts {model, prompt: context+target, max_tokens: 0, echo: true, logprobs}
// and reads the echoed per-token log-probabilities; the target span is
// selected by text offset, so token boundaries are the endpoint's. The HTTP
// layer is injectable: tests drive the client from recorded fixtures and a
// failure-injecting transport, never a live endpoint.

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "remid/common.hpp"
#include "remid/providers.hpp"

namespace remid::remote {

using json = nlohmann::json;

struct HttpRequest {
    std::string url;
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
};

struct HttpResult {
    bool transport_ok = false;
    std::string transport_error;
    int status = 0;
    std::string body;
};

using Transport = std::function<HttpResult(const HttpRequest&)>;

inline Transport make_httplib_transport();

struct RemoteConfig {
    std::string endpoint;            // full URL of the completions route
    std::string model;
    std::string api_key_env = "REMID_API_KEY";
    int logprobs = 1;
    std::size_t max_retries = 3;     // retryable failures only
    std::size_t backoff_ms = 100;    // doubled per attempt
    std::size_t max_in_flight = 4;
    std::size_t sample_max_tokens = 256;
};

// ---------------------------------------------------------------------------

class RemoteProvider final : public prov::Provider {
public:
    explicit RemoteProvider(RemoteConfig cfg, Transport transport = {})
        : cfg_(std::move(cfg)), transport_(std::move(transport)) {
        if (cfg_.endpoint.empty()) throw ConfigError("remote endpoint URL is empty");
        if (!transport_) transport_ = make_httplib_transport();
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            api_key_ = key;
    }

    std::string backend_id() const override { return "remote:" + cfg_.model + "@" + cfg_.endpoint; }

    std::string build_score_body(const prov::RenderedContext& ctx,
                                 const prov::Target& target) const {
        json body;
        body["model"] = cfg_.model;
        body["prompt"] = ctx.text + target.text;
        body["max_tokens"] = 0;
        body["echo"] = true;
        body["logprobs"] = cfg_.logprobs;
        return body.dump();
    }

    std::string build_sample_body(const prov::RenderedContext& ctx, std::size_t k,
                                  double temperature) const {
        json body;
        body["model"] = cfg_.model;
        body["prompt"] = ctx.text;
        body["max_tokens"] = cfg_.sample_max_tokens;
        body["n"] = k;
        body["temperature"] = temperature;
        body["logprobs"] = cfg_.logprobs;
        return body.dump();
    }

    prov::ScoredText score(const prov::RenderedContext& ctx, const prov::Target& target) override {
        InFlightGuard guard(*this);
        if (target.text.empty()) throw ConfigError("remote score requires target text");
        auto res = post_with_retries(build_score_body(ctx, target));
        return parse_echo_logprobs(res.body, ctx.text.size(), target.text);
    }

    std::vector<prov::ScoredText> sample(const prov::RenderedContext& ctx, std::size_t k,
                                         double temperature,
                                         std::optional<std::uint64_t> = std::nullopt) override {
        InFlightGuard guard(*this);
        auto res = post_with_retries(build_sample_body(ctx, k, temperature));
        return parse_completions(res.body);
    }

    std::size_t last_retry_count() const { return last_retries_; }
    const std::vector<std::string>& event_log() const { return events_; }

    // ---- parsing -----------------------------------------------------------

    static prov::ScoredText parse_echo_logprobs(const std::string& body, std::size_t context_len,
                                                const std::string& target_text) {
        json root = json::parse(body, nullptr, false);
        if (root.is_discarded()) throw ProtocolError("response is not JSON: " + excerpt(body));
        const json* lp = nullptr;
        try {
            lp = &root.at("choices").at(0).at("logprobs");
        } catch (const json::exception&) {
            throw ProtocolError("response lacks choices[0].logprobs: " + excerpt(body));
        }
        if (lp->is_null() || !lp->contains("token_logprobs") || !lp->contains("text_offset"))
            throw ConfigError(
                "endpoint did not return per-token log-probabilities; enable echoed logprobs");
        const auto& logprobs = lp->at("token_logprobs");
        const auto& offsets = lp->at("text_offset");
        if (logprobs.size() != offsets.size())
            throw ProtocolError("token_logprobs/text_offset length mismatch");
        std::vector<double> target_lps;
        for (std::size_t i = 0; i < logprobs.size(); ++i) {
            std::size_t off = offsets[i].get<std::size_t>();
            if (off < context_len) continue;  // context token
            if (logprobs[i].is_null())
                throw ProtocolError("null log-probability inside the target span");
            double v = logprobs[i].get<double>();
            if (v > 0.0) {
                // Some servers emit tiny positive values from summing
                // float32 pieces; anything material is a protocol fault.
                if (v > 1e-6) throw ProtocolError("positive token log-probability: " + fmt_double(v));
                v = 0.0;
            }
            target_lps.push_back(v);
        }
        if (target_lps.empty())
            throw ProtocolError("no tokens fell inside the target span; is echo enabled?");
        return prov::make_scored(target_text, std::move(target_lps));
    }

    static std::vector<prov::ScoredText> parse_completions(const std::string& body) {
        json root = json::parse(body, nullptr, false);
        if (root.is_discarded()) throw ProtocolError("response is not JSON: " + excerpt(body));
        if (!root.contains("choices") || !root["choices"].is_array())
            throw ProtocolError("response lacks a choices array: " + excerpt(body));
        std::vector<prov::ScoredText> out;
        for (const auto& choice : root["choices"]) {
            std::string text = choice.value("text", std::string());
            std::vector<double> lps;
            if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
                choice["logprobs"].contains("token_logprobs")) {
                for (const auto& v : choice["logprobs"]["token_logprobs"]) {
                    if (v.is_null()) continue;
                    double lp = v.get<double>();
                    lps.push_back(lp > 0.0 ? 0.0 : lp);
                }
            }
            out.push_back(prov::make_scored(text, std::move(lps)));
        }
        if (out.empty()) throw ProtocolError("empty choices in completion response");
        return out;
    }

private:
    struct InFlightGuard {
        explicit InFlightGuard(RemoteProvider& p) : provider(p) {
            std::unique_lock<std::mutex> lock(provider.mu_);
            provider.cv_.wait(lock,
                              [&] { return provider.in_flight_ < provider.cfg_.max_in_flight; });
            ++provider.in_flight_;
        }
        ~InFlightGuard() {
            {
                std::lock_guard<std::mutex> lock(provider.mu_);
                --provider.in_flight_;
            }
            provider.cv_.notify_one();
        }
        RemoteProvider& provider;
    };

    static std::string excerpt(const std::string& body) {
        return body.size() <= 200 ? body : body.substr(0, 200) + "...";
    }

    HttpRequest make_request(std::string body) const {
        HttpRequest req;
        req.url = cfg_.endpoint;
        req.body = std::move(body);
        req.headers.emplace_back("Content-Type", "application/json");
        if (!api_key_.empty()) req.headers.emplace_back("Authorization", "Bearer " + api_key_);
        return req;
    }

    HttpResult post_with_retries(std::string body) {
        HttpRequest req = make_request(std::move(body));
        std::string last_error;
        last_retries_ = 0;
        for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) {
                last_retries_ = attempt;
                events_.push_back("retry " + std::to_string(attempt) + ": " + last_error);
                if (cfg_.backoff_ms > 0)
                    std::this_thread::sleep_for(std::chrono::milliseconds(
                        cfg_.backoff_ms << (attempt - 1)));
            }
            HttpResult res = transport_(req);
            if (!res.transport_ok) {
                last_error = "transport failure: " + res.transport_error;
                continue;
            }
            if (res.status == 401 || res.status == 403)
                throw ConfigError("endpoint rejected credentials (HTTP " +
                                  std::to_string(res.status) + ")");
            if (res.status == 429 || res.status >= 500) {
                last_error = "HTTP " + std::to_string(res.status) + ": " + excerpt(res.body);
                continue;
            }
            if (res.status < 200 || res.status >= 300)
                throw ProtocolError("HTTP " + std::to_string(res.status) + ": " +
                                    excerpt(res.body));
            return res;
        }
        throw TransportError("request failed after " + std::to_string(cfg_.max_retries) +
                             " retries; last error: " + last_error);
    }

    RemoteConfig cfg_;
    Transport transport_;
    std::string api_key_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
    std::size_t last_retries_ = 0;
    std::vector<std::string> events_;
};

}  // namespace remid::remote

// The httplib-backed transport lives in a separate inline function so that
// translation units which only replay fixtures don't have to pay for it.
#ifndef REMID_NO_HTTPLIB
#include <httplib.h>

namespace remid::remote {

inline Transport make_httplib_transport() {
    return [](const HttpRequest& req) -> HttpResult {
        HttpResult out;
        // split scheme://host:port and path
        std::string url = req.url;
        auto scheme_pos = url.find("://");
        if (scheme_pos == std::string::npos) {
            out.transport_error = "endpoint URL lacks a scheme: " + url;
            return out;
        }
        std::string scheme = url.substr(0, scheme_pos);
        if (scheme != "http") {
            out.transport_error = "only http endpoints are supported by this build";
            return out;
        }
        auto path_pos = url.find('/', scheme_pos + 3);
        std::string base = path_pos == std::string::npos ? url : url.substr(0, path_pos);
        std::string path = path_pos == std::string::npos ? "/" : url.substr(path_pos);
        httplib::Client client(base);
        client.set_connection_timeout(30);
        client.set_read_timeout(120);
        httplib::Headers headers;
        for (const auto& [k, v] : req.headers)
            if (k != "Content-Type") headers.emplace(k, v);
        auto res = client.Post(path, headers, req.body, "application/json");
        if (!res) {
            out.transport_error = httplib::to_string(res.error());
            return out;
        }
        out.transport_ok = true;
        out.status = res->status;
        out.body = res->body;
        return out;
    };
}

}  // namespace remid::remote
#else
namespace remid::remote {
inline Transport make_httplib_transport() {
    throw ConfigError("this build has no HTTP transport; inject one");
}
}  // namespace remid::remote
#endif
