#pragma once

#include <stdexcept>
#include <string>

namespace glider {

// Every failure the library reports, as a single exception type carrying a
// machine-checkable code. Messages are for humans; tests match on the code.
enum class Errc {
    zero_variance,
    dim_too_small,
    zero_norm,
    bad_k,
    bad_p,
    no_convergence,
    dim_mismatch,
    shape_mismatch,
    non_finite,
    missing_gate,
    missing_global,
    diverged,
    bad_example_count,
    llm_unavailable,
    empty_completion,
    embed_unavailable,
    empty_text,
    duplicate_name,
    version_mismatch,
    corrupt_file,
    io_error,
    too_few_tasks,
    bad_argument, // catch-all for precondition violations without a named kind
};

class GliderError : public std::runtime_error {
public:
    GliderError(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
    throw GliderError(code, what);
}

} // namespace glider
