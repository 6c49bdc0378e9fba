#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glider/linalg.hpp"
#include "glider/rng.hpp"

namespace glider {

// Feed-forward stand-in for a frozen base model: m linear modules of width d
// with tanh between modules (not after the last). Weights are a pure function
// of (d, m, seed).
struct ToyBaseModel {
    std::size_t d = 16;
    std::size_t m = 4;
    std::uint64_t seed = 0;
    std::string nonlinearity = "tanh";
    std::vector<Mat> weights; // m matrices, d×d
    std::vector<Vec> biases;  // m vectors, d

    static ToyBaseModel make(std::size_t d, std::size_t m, std::uint64_t seed);
};

struct BaseForwardResult {
    Vec output;
    std::vector<Vec> activations; // activations[i] = input to module i
};

BaseForwardResult base_forward(const ToyBaseModel& model, const Vec& u);

// One low-rank update site: W u  →  W u + (lora_scaling / rank) · B A u,
// optionally gated by σ(vᵀu) during contributor-side training.
struct LoraModule {
    Mat a;                   // rank × d
    Mat b;                   // d × rank
    std::size_t rank = 0;
    double lora_scaling = 1.0;
    std::optional<Vec> gate; // v, absent until gate training

    double scale() const { return lora_scaling / static_cast<double>(rank); }
};

// Fresh module for a layer of width d: A seeded uniform, B zero (so the
// initial update is exactly zero), no gate.
LoraModule make_lora_module(std::size_t d, std::size_t rank, double lora_scaling, Rng& rng);

Vec lora_forward(const Mat& w, const LoraModule& mod, const Vec& u);
Vec gated_forward(const Mat& w, const LoraModule& mod, const Vec& u);

// adapter term only: (lora_scaling/rank) · B A u
Vec lora_delta(const LoraModule& mod, const Vec& u);

struct ExpertModel {
    std::string name;
    std::vector<LoraModule> modules;   // one per base-model layer
    std::optional<Vec> global_vector;  // g, unit norm once set
    std::string task_description;
};

ExpertModel make_expert(const std::string& name, const ToyBaseModel& base,
                        std::size_t rank, double lora_scaling, Rng& rng);

// Full adapted forward pass (ungated): every layer applies its LoRA update.
// This is the expert as routed to at inference with weight 1.
Vec expert_forward(const ToyBaseModel& base, const ExpertModel& expert, const Vec& u);

// Gated variant, used during local-gate training.
Vec expert_forward_gated(const ToyBaseModel& base, const ExpertModel& expert, const Vec& u);

double logistic(double x);

} // namespace glider
