#include "glider/semantic.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "glider/rng.hpp"

namespace glider {

namespace {

constexpr const char* kInstructionSentence =
    "The following are three pairs of input-output examples from one task. Generate the task "
    "instruction in one sentence that is most possibly used to command a language model to "
    "produce them. In the instruction, remember to point out the skill or knowledge required "
    "for the task to guide the language model.";

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string env_or(const char* name, const char* fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string(fallback);
}

// scheme://host[:port] and the path prefix after it
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        raise(Errc::bad_argument, "remote client: base_url missing scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

// One POST with retry/backoff; returns the raw body of the first 2xx reply.
std::string post_with_retries(const std::string& base_url, const std::string& path,
                              const std::string& api_key, const std::string& body,
                              int max_retries, double backoff_initial_s, double timeout_s,
                              Errc unavailable) {
    const auto [host, prefix] = split_url(base_url);
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        if (attempt > 0) {
            const double delay = backoff_initial_s * static_cast<double>(1 << (attempt - 1));
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        httplib::Client cli(host);
        cli.set_connection_timeout(std::chrono::duration<double>(timeout_s));
        cli.set_read_timeout(std::chrono::duration<double>(timeout_s));
        cli.set_write_timeout(std::chrono::duration<double>(timeout_s));
        httplib::Headers headers;
        if (!api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + api_key);
        }
        auto res = cli.Post(prefix + path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        return res->body;
    }
    raise(unavailable, "remote " + path + " failed after " + std::to_string(max_retries + 1) +
                           " attempts (" + last_error + ")");
}

} // namespace

std::string build_prompt(const InstructionRequest& req) {
    if (req.examples.size() != 3) {
        raise(Errc::bad_example_count,
              "build_prompt: need exactly 3 example pairs, got " + std::to_string(req.examples.size()));
    }
    std::string out = kInstructionSentence;
    for (const ExamplePair& ex : req.examples) {
        out += "\n\n- Input: " + ex.input;
        out += "\n- Output: " + ex.output;
    }
    return out;
}

std::string MockLlmClient::complete_impl(const std::string& prompt) {
    char sig[32];
    std::snprintf(sig, sizeof(sig), "%016" PRIx64, mix_seed(fnv1a64(prompt), seed_));
    return "Apply the numeric transformation shared by the three examples, identified by "
           "signature " + std::string(sig) +
           ", using knowledge of fixed linear maps over real vectors.";
}

HttpClientConfig HttpClientConfig::from_env() {
    HttpClientConfig cfg;
    cfg.base_url = env_or("GLIDER_LLM_BASE_URL", "");
    cfg.api_key = env_or("GLIDER_LLM_API_KEY", "");
    return cfg;
}

std::string HttpLlmClient::complete_impl(const std::string& prompt) {
    if (cfg_.base_url.empty()) {
        raise(Errc::llm_unavailable, "remote llm: GLIDER_LLM_BASE_URL not configured");
    }
    nlohmann::json body = {
        {"model", cfg_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
    };
    const std::string reply =
        post_with_retries(cfg_.base_url, "/chat/completions", cfg_.api_key, body.dump(),
                          cfg_.max_retries, cfg_.backoff_initial_s, cfg_.timeout_s,
                          Errc::llm_unavailable);
    try {
        const auto json = nlohmann::json::parse(reply);
        return json.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::llm_unavailable, std::string("remote llm: malformed response: ") + e.what());
    }
}

Embedder::Embedder(std::size_t d_g) : d_g_(d_g) {
    if (d_g < 8) {
        raise(Errc::bad_argument, "embedder: d_g must be >= 8");
    }
}

Vec Embedder::embed(const std::string& text) {
    if (text.empty()) {
        raise(Errc::empty_text, "embed: empty text");
    }
    ++calls_;
    Vec v = embed_impl(text);
    const double n = linalg::norm(v);
    if (n <= linalg::kEps) {
        raise(Errc::embed_unavailable, "embed: degenerate zero embedding");
    }
    for (double& x : v) x /= n;
    return v;
}

namespace {

class MockEmbedder final : public Embedder {
public:
    MockEmbedder(std::size_t d_g, std::uint64_t seed) : Embedder(d_g), seed_(seed) {}

protected:
    Vec embed_impl(const std::string& text) override {
        Rng rng(mix_seed(fnv1a64(text), seed_));
        Vec v(d_g_);
        for (double& x : v) x = rng.normal();
        return v;
    }

private:
    std::uint64_t seed_;
};

class HttpEmbedder final : public Embedder {
public:
    explicit HttpEmbedder(const EmbedderSpec& spec) : Embedder(spec.d_g), spec_(spec) {}

protected:
    Vec embed_impl(const std::string& text) override {
        if (spec_.base_url.empty()) {
            raise(Errc::embed_unavailable, "remote embedder: GLIDER_EMBED_BASE_URL not configured");
        }
        nlohmann::json body = {{"model", spec_.model}, {"input", nlohmann::json::array({text})}};
        const std::string reply = post_with_retries(
            spec_.base_url, "/embeddings", spec_.api_key, body.dump(), spec_.max_retries,
            spec_.backoff_initial_s, spec_.timeout_s, Errc::embed_unavailable);
        try {
            const auto json = nlohmann::json::parse(reply);
            const auto& arr = json.at("data").at(0).at("embedding");
            Vec v;
            v.reserve(arr.size());
            for (const auto& x : arr) v.push_back(x.get<double>());
            d_g_ = v.size(); // the remote model decides the true dimension
            return v;
        } catch (const nlohmann::json::exception& e) {
            raise(Errc::embed_unavailable,
                  std::string("remote embedder: malformed response: ") + e.what());
        }
    }

private:
    EmbedderSpec spec_;
};

} // namespace

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec) {
    if (spec.kind == EmbedderSpec::Kind::mock) {
        return std::make_unique<MockEmbedder>(spec.d_g, spec.mock_seed);
    }
    return std::make_unique<HttpEmbedder>(spec);
}

Vec embed(const std::string& text, const EmbedderSpec& spec) {
    return make_embedder(spec)->embed(text);
}

std::string generate_description(const InstructionRequest& req, LlmClient& client) {
    const std::string prompt = build_prompt(req);
    const std::string description = trim(client.complete(prompt));
    if (description.empty()) {
        raise(Errc::empty_completion, "generate_description: blank completion");
    }
    return description;
}

GlobalVectorResult make_global_vector(const InstructionRequest& req, LlmClient& client,
                                      Embedder& embedder) {
    GlobalVectorResult out;
    out.description = generate_description(req, client);
    out.g = embedder.embed(out.description);
    return out;
}

} // namespace glider
