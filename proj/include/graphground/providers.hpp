#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "graphground/geometry.hpp"

namespace graphground {

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string text;
    std::optional<std::string> image_png;  // binary PNG payload, inlined as base64 on the wire
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    /// Embeds a batch of texts into unit-norm vectors, one per input.
    /// Throws on empty input or on provider failure.
    virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;

    Embedding embed_one(const std::string& text);
};

class ChatClient {
public:
    virtual ~ChatClient() = default;

    /// Single completion for a non-empty message list.
    virtual std::string chat(const std::vector<ChatMessage>& messages) = 0;
};

struct ProviderConfig {
    std::string endpoint;          // e.g. http://localhost:8080
    std::string api_key_env;       // name of the env var holding the key
    std::string model;
    double timeout_s = 30.0;
    int max_retries = 2;
    int requests_per_minute = 60;

    void validate() const;
};

/// Client-side request throttle. Capacity refills continuously at
/// requests_per_minute; acquire() blocks until a token is available.
class TokenBucket {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    explicit TokenBucket(int requests_per_minute, Clock clock = nullptr);

    void acquire();

    /// Non-blocking variant used by tests: returns the wait that acquire()
    /// would incur, taking a token if one is available now.
    std::chrono::milliseconds try_acquire();

private:
    double capacity_;
    double tokens_;
    double refill_per_ms_;
    std::chrono::steady_clock::time_point last_;
    Clock clock_;
    std::mutex mu_;
};

/// FNV-1a 64-bit hash; stable across platforms.
std::uint64_t fnv1a64(const std::string& s);

/// Lowercases, trims, and collapses internal whitespace.
std::string normalize_text(const std::string& s);

/// Deterministic unit vector derived from the normalized text. Texts listed
/// in the built-in synonym table map to vectors with cosine 0.9 against
/// their canonical form; identical strings always map to identical vectors.
Embedding mock_embed_text(const std::string& text, int dim = 256);

/// canonical -> aliases table used by mock_embed_text.
const std::map<std::string, std::vector<std::string>>& mock_synonym_table();

class MockEmbedder : public EmbeddingProvider {
public:
    explicit MockEmbedder(int dim = 256) : dim_(dim) {}
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
    int dim() const { return dim_; }

private:
    int dim_;
};

/// Scripted chat client for hermetic tests. Plays back an ordered response
/// list, or rule-matches on prompt substrings; records every prompt.
class MockChat : public ChatClient {
public:
    MockChat() = default;
    explicit MockChat(std::vector<std::string> script) : script_(std::move(script)) {}

    /// Adds a substring rule; first matching rule wins over the script.
    void add_rule(const std::string& contains, const std::string& response);
    /// Fallback response used when the script is empty and no rule matches.
    void set_default_response(const std::string& response);

    std::string chat(const std::vector<ChatMessage>& messages) override;

    const std::vector<std::string>& prompts() const { return prompts_; }

private:
    std::vector<std::string> script_;
    std::size_t next_ = 0;
    std::vector<std::pair<std::string, std::string>> rules_;
    std::optional<std::string> default_response_;
    std::vector<std::string> prompts_;
    std::mutex mu_;
};

/// Providers that refuse all calls; used to prove a code path is offline.
class OfflineEmbedder : public EmbeddingProvider {
public:
    std::vector<Embedding> embed(const std::vector<std::string>&) override;
};
class OfflineChat : public ChatClient {
public:
    std::string chat(const std::vector<ChatMessage>&) override;
};

/// Embeddings over the de-facto JSON embeddings endpoint
/// (POST {endpoint}/v1/embeddings with {"model","input":[...]}).
class HttpEmbedder : public EmbeddingProvider {
public:
    explicit HttpEmbedder(ProviderConfig config);
    ~HttpEmbedder() override;
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Chat over the de-facto JSON chat-completions endpoint
/// (POST {endpoint}/v1/chat/completions).
class HttpChat : public ChatClient {
public:
    explicit HttpChat(ProviderConfig config);
    ~HttpChat() override;
    std::string chat(const std::vector<ChatMessage>& messages) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace graphground
