#include "graphground/providers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace graphground {

using json = nlohmann::json;

Embedding EmbeddingProvider::embed_one(const std::string& text) {
    return embed({text}).front();
}

void ProviderConfig::validate() const {
    if (endpoint.empty()) throw std::runtime_error("provider endpoint is empty");
    if (!(timeout_s > 0)) throw std::runtime_error("provider timeout must be > 0");
    if (max_retries < 0) throw std::runtime_error("provider retries must be >= 0");
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string normalize_text(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    return out;
}

namespace {

double next_unit(std::mt19937_64& rng) {
    // uniform in [-1, 1); exact arithmetic, stable across platforms
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
}

Embedding hash_vector(const std::string& normalized, int dim, std::uint64_t salt) {
    std::mt19937_64 rng(fnv1a64(normalized) ^ salt);
    Embedding v(dim);
    for (int i = 0; i < dim; ++i) v[i] = next_unit(rng);
    const double n = v.norm();
    if (n < 1e-12) {
        v.setZero();
        v[0] = 1.0;
        return v;
    }
    return v / n;
}

const std::map<std::string, std::string>& alias_to_canonical() {
    static const std::map<std::string, std::string> table = [] {
        std::map<std::string, std::string> out;
        for (const auto& [canonical, aliases] : mock_synonym_table()) {
            for (const std::string& alias : aliases) out[alias] = canonical;
        }
        return out;
    }();
    return table;
}

}  // namespace

const std::map<std::string, std::vector<std::string>>& mock_synonym_table() {
    static const std::map<std::string, std::vector<std::string>> table = {
        {"sofa", {"couch"}},
        {"trash can", {"garbage bin", "garbage can", "bin"}},
        {"on top of", {"on", "atop"}},
        {"below", {"under", "beneath", "underneath"}},
        {"television", {"tv"}},
        {"refrigerator", {"fridge"}},
        {"near", {"next to", "beside", "close to"}},
        {"in front of", {"front of"}},
    };
    return table;
}

Embedding mock_embed_text(const std::string& text, int dim) {
    const std::string n = normalize_text(text);
    const auto& aliases = alias_to_canonical();
    auto it = aliases.find(n);
    if (it == aliases.end()) {
        return hash_vector(n, dim, 0);
    }
    const Embedding canon = hash_vector(it->second, dim, 0);
    Embedding w = hash_vector(n, dim, 0x6f7274686f676f6eull);
    w -= w.dot(canon) * canon;
    const double wn = w.norm();
    if (wn < 1e-9) {
        w = hash_vector(n, dim, 0x6f7274686f676f6full);
        w -= w.dot(canon) * canon;
        w.normalize();
    } else {
        w /= wn;
    }
    return 0.9 * canon + std::sqrt(1.0 - 0.81) * w;
}

std::vector<Embedding> MockEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) {
        throw std::invalid_argument("embed requires a non-empty input batch");
    }
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(mock_embed_text(t, dim_));
    return out;
}

void MockChat::add_rule(const std::string& contains, const std::string& response) {
    rules_.emplace_back(contains, response);
}

void MockChat::set_default_response(const std::string& response) {
    default_response_ = response;
}

std::string MockChat::chat(const std::vector<ChatMessage>& messages) {
    if (messages.empty()) {
        throw std::invalid_argument("chat requires a non-empty message list");
    }
    std::string prompt;
    for (const ChatMessage& m : messages) {
        prompt += m.role;
        prompt += ": ";
        prompt += m.text;
        prompt += '\n';
    }
    std::lock_guard<std::mutex> lock(mu_);
    prompts_.push_back(prompt);
    for (const auto& [needle, response] : rules_) {
        if (prompt.find(needle) != std::string::npos) return response;
    }
    if (next_ < script_.size()) return script_[next_++];
    if (!script_.empty() || rules_.empty()) {
        if (default_response_) return *default_response_;
        throw std::runtime_error("mock chat script exhausted");
    }
    if (default_response_) return *default_response_;
    throw std::runtime_error("no mock chat rule matched prompt");
}

std::vector<Embedding> OfflineEmbedder::embed(const std::vector<std::string>&) {
    throw std::runtime_error("offline embedder invoked");
}

std::string OfflineChat::chat(const std::vector<ChatMessage>&) {
    throw std::runtime_error("offline chat client invoked");
}

TokenBucket::TokenBucket(int requests_per_minute, Clock clock)
    : capacity_(requests_per_minute > 0 ? requests_per_minute : 0),
      tokens_(capacity_),
      refill_per_ms_(capacity_ / 60000.0),
      clock_(clock ? std::move(clock) : [] { return std::chrono::steady_clock::now(); }) {
    last_ = clock_();
}

std::chrono::milliseconds TokenBucket::try_acquire() {
    if (capacity_ <= 0) return std::chrono::milliseconds(0);  // unlimited
    std::lock_guard<std::mutex> lock(mu_);
    const auto now = clock_();
    const double elapsed_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(now - last_)
            .count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + elapsed_ms * refill_per_ms_);
    if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return std::chrono::milliseconds(0);
    }
    const double wait_ms = (1.0 - tokens_) / refill_per_ms_;
    return std::chrono::milliseconds(static_cast<long long>(std::ceil(wait_ms)));
}

void TokenBucket::acquire() {
    for (;;) {
        const auto wait = try_acquire();
        if (wait.count() == 0) return;
        std::this_thread::sleep_for(wait);
    }
}

namespace {

std::string base64_encode(const std::string& data) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < data.size()) {
        const unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                           (static_cast<unsigned char>(data[i + 1]) << 8) |
                           static_cast<unsigned char>(data[i + 2]);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += alphabet[v & 63];
        i += 3;
    }
    if (i + 1 == data.size()) {
        const unsigned v = static_cast<unsigned char>(data[i]) << 16;
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == data.size()) {
        const unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                           (static_cast<unsigned char>(data[i + 1]) << 8);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

ProviderConfig validated(ProviderConfig c) {
    c.validate();
    return c;
}

struct HttpCore {
    ProviderConfig cfg;
    httplib::Client client;
    TokenBucket bucket;
    std::string api_key;
    std::mutex post_mu;  // httplib::Client is not safe for concurrent requests

    explicit HttpCore(ProviderConfig c)
        : cfg(validated(std::move(c))), client(cfg.endpoint), bucket(cfg.requests_per_minute) {
        client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_s));
        client.set_write_timeout(std::chrono::duration<double>(cfg.timeout_s));
        if (!cfg.api_key_env.empty()) {
            if (const char* key = std::getenv(cfg.api_key_env.c_str())) {
                api_key = key;
            }
        }
    }

    json post(const std::string& path, const json& body) {
        httplib::Headers headers;
        if (!api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + api_key);
        }
        const std::string payload = body.dump();
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
            bucket.acquire();
            std::lock_guard<std::mutex> lock(post_mu);
            auto res = client.Post(path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                throw std::runtime_error("provider error: HTTP " +
                                         std::to_string(res->status) + " on " + path);
            }
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                throw std::runtime_error(std::string("provider error: bad JSON response: ") +
                                         e.what());
            }
        }
        throw std::runtime_error("provider error after " +
                                 std::to_string(cfg.max_retries + 1) + " attempts: " +
                                 last_error);
    }
};

}  // namespace

struct HttpEmbedder::Impl : HttpCore {
    using HttpCore::HttpCore;
};

HttpEmbedder::HttpEmbedder(ProviderConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpEmbedder::~HttpEmbedder() = default;

std::vector<Embedding> HttpEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) {
        throw std::invalid_argument("embed requires a non-empty input batch");
    }
    json body{{"model", impl_->cfg.model}, {"input", texts}};
    const json res = impl_->post("/v1/embeddings", body);
    if (!res.contains("data") || !res["data"].is_array() ||
        res["data"].size() != texts.size()) {
        throw std::runtime_error("provider error: embeddings response size mismatch");
    }
    std::vector<Embedding> out;
    out.reserve(texts.size());
    Eigen::Index dim = -1;
    for (const json& item : res["data"]) {
        const auto& vec = item.at("embedding");
        Embedding e(vec.size());
        for (std::size_t i = 0; i < vec.size(); ++i) e[static_cast<Eigen::Index>(i)] = vec[i].get<double>();
        if (dim < 0) dim = e.size();
        if (e.size() != dim) {
            throw std::runtime_error("provider error: inconsistent embedding dimensions");
        }
        const double n = e.norm();
        if (n == 0.0) throw std::runtime_error("degenerate embedding");
        out.push_back(e / n);
    }
    return out;
}

struct HttpChat::Impl : HttpCore {
    using HttpCore::HttpCore;
};

HttpChat::HttpChat(ProviderConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpChat::~HttpChat() = default;

std::string HttpChat::chat(const std::vector<ChatMessage>& messages) {
    if (messages.empty()) {
        throw std::invalid_argument("chat requires a non-empty message list");
    }
    json msgs = json::array();
    for (const ChatMessage& m : messages) {
        if (m.image_png) {
            json content = json::array();
            content.push_back({{"type", "text"}, {"text", m.text}});
            content.push_back(
                {{"type", "image_url"},
                 {"image_url",
                  {{"url", "data:image/png;base64," + base64_encode(*m.image_png)}}}});
            msgs.push_back({{"role", m.role}, {"content", content}});
        } else {
            msgs.push_back({{"role", m.role}, {"content", m.text}});
        }
    }
    json body{{"model", impl_->cfg.model}, {"messages", msgs}};
    const json res = impl_->post("/v1/chat/completions", body);
    try {
        return res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("provider error: unexpected chat response: ") +
                                 e.what());
    }
}

}  // namespace graphground
