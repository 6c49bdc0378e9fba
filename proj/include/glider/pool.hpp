#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "glider/expert.hpp"

namespace glider {

inline constexpr const char* kPoolFormatVersion = "glider-pool/1";

// Aggregator-side registry. Expert order is load-bearing: router rows follow
// it, so append-only mutation keeps existing indices stable.
struct ExpertPool {
    std::string version = kPoolFormatVersion;
    ToyBaseModel base;
    std::size_t d_g = 64;
    std::string created_by = "glider-cli/1";
    std::vector<ExpertModel> experts;

    std::optional<std::size_t> index_of(const std::string& name) const;
};

ExpertPool make_pool(std::size_t d, std::size_t m, std::uint64_t seed, std::size_t d_g);

// Appends; throws Errc::duplicate_name / Errc::dim_mismatch.
void add_expert(ExpertPool& pool, ExpertModel expert);

// Single JSON document; numeric arrays are base64-encoded IEEE-754
// little-endian f64 blobs with explicit shapes, so round-trips are
// bit-identical on every platform.
void save_pool(const ExpertPool& pool, const std::filesystem::path& path);
ExpertPool load_pool(const std::filesystem::path& path);

std::string pool_to_json(const ExpertPool& pool);
ExpertPool pool_from_json(const std::string& text);

} // namespace glider
