#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "glider/linalg.hpp"

namespace glider {

struct ExamplePair {
    std::string input;
    std::string output;
};

enum class RequestOrigin { expert_side, query_side };

// Exactly three in-context pairs; the instruction-generation prompt is fixed
// to that count.
struct InstructionRequest {
    std::vector<ExamplePair> examples;
    RequestOrigin origin = RequestOrigin::expert_side;
};

// Renders the instruction-generation prompt. Byte-stable for identical input.
std::string build_prompt(const InstructionRequest& req);

class LlmClient {
public:
    virtual ~LlmClient() = default;
    std::string complete(const std::string& prompt) {
        ++calls_;
        return complete_impl(prompt);
    }
    std::size_t call_count() const { return calls_; }

protected:
    virtual std::string complete_impl(const std::string& prompt) = 0;

private:
    std::size_t calls_ = 0;
};

// Offline stand-in: a canned one-sentence description keyed by a hash of the
// prompt, so identical requests yield identical descriptions.
class MockLlmClient final : public LlmClient {
public:
    explicit MockLlmClient(std::uint64_t seed = 0) : seed_(seed) {}

protected:
    std::string complete_impl(const std::string& prompt) override;

private:
    std::uint64_t seed_;
};

struct HttpClientConfig {
    std::string base_url; // scheme://host[:port][/path-prefix], e.g. .../v1
    std::string api_key;
    std::string model = "gpt-4-turbo";
    int max_retries = 2; // 3 attempts total
    double backoff_initial_s = 1.0;
    double timeout_s = 30.0;

    // GLIDER_LLM_BASE_URL / GLIDER_LLM_API_KEY
    static HttpClientConfig from_env();
};

// Chat-completions client. Retries with exponential backoff; throws
// Errc::llm_unavailable once attempts are exhausted.
class HttpLlmClient final : public LlmClient {
public:
    explicit HttpLlmClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {}

protected:
    std::string complete_impl(const std::string& prompt) override;

private:
    HttpClientConfig cfg_;
};

struct EmbedderSpec {
    enum class Kind { mock, remote };
    Kind kind = Kind::mock;
    std::size_t d_g = 64;
    std::uint64_t mock_seed = 0;
    std::string base_url; // GLIDER_EMBED_BASE_URL when remote
    std::string api_key;
    std::string model = "nomic-embed-text-v1.5";
    int max_retries = 2;
    double backoff_initial_s = 1.0;
    double timeout_s = 30.0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    // Unit-norm vector of dimension d_g. Throws Errc::empty_text on "".
    Vec embed(const std::string& text);
    std::size_t call_count() const { return calls_; }
    std::size_t dim() const { return d_g_; }

protected:
    explicit Embedder(std::size_t d_g);
    virtual Vec embed_impl(const std::string& text) = 0;
    std::size_t d_g_;

private:
    std::size_t calls_ = 0;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec);

// One-shot convenience over make_embedder.
Vec embed(const std::string& text, const EmbedderSpec& spec);

// generate + trim; throws Errc::empty_completion on a blank reply
std::string generate_description(const InstructionRequest& req, LlmClient& client);

struct GlobalVectorResult {
    Vec g;
    std::string description;
};

// g = embed(generate_description(req)); both returned for persistence.
GlobalVectorResult make_global_vector(const InstructionRequest& req, LlmClient& client,
                                      Embedder& embedder);

} // namespace glider
