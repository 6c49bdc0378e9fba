#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "glider/expert.hpp"
#include "glider/linalg.hpp"
#include "glider/rng.hpp"

namespace glider {

// Regression stand-in for a contributor's dataset: inputs cluster around a
// center, targets come from a fixed ground-truth linear map.
struct SyntheticTask {
    std::string name;
    Mat target_map;          // d×d
    Vec input_center;
    double input_spread = 0.3;
    std::string description_text;
    std::uint64_t seed = 0;
};

SyntheticTask make_task(const std::string& name, std::size_t d, std::uint64_t seed);

struct TrainConfig {
    std::size_t lora_steps = 1000;
    std::size_t gate_steps = 100;
    double learning_rate = 5e-3;
    double warmup_ratio = 0.06;
    std::size_t batch_size = 32;
    double weight_decay = 0.01;
    std::size_t rank = 4;
    double lora_scaling = 1.0;
    std::uint64_t seed = 0;
};

struct Sample {
    Vec input;
    Vec target;
};

std::vector<Sample> sample_batch(const SyntheticTask& task, std::size_t n, Rng& rng);

// MSE (mean over dims, mean over samples) of an arbitrary forward map.
double batch_loss(const std::function<Vec(const Vec&)>& forward, const std::vector<Sample>& batch);

struct StepLoss {
    std::size_t step;
    double loss;
};

void write_metrics_csv(const std::vector<StepLoss>& log, const std::filesystem::path& path);

struct TrainRun {
    ExpertModel expert;
    std::vector<StepLoss> log;
    double eval_loss = 0.0;     // fresh-batch MSE of the returned expert
    double baseline_loss = 0.0; // fresh-batch MSE of the reference path (see each op)
};

// Phase 1: train A,B through the ungated LoRA forward; base frozen.
// baseline_loss is the zero-adapter (plain base) loss on the eval batch.
TrainRun train_lora(const ToyBaseModel& base, const SyntheticTask& task, const TrainConfig& cfg);

// Phase 2: freeze A,B, add a zero-initialized gate per module and train it
// through the gated forward. baseline_loss is the ungated LoRA loss on the
// eval batch; eval_loss is the gated loss.
TrainRun train_gate(const ToyBaseModel& base, ExpertModel expert, const SyntheticTask& task,
                    const TrainConfig& cfg);

// Both phases back to back; the usual contributor entry point.
TrainRun train_expert(const ToyBaseModel& base, const SyntheticTask& task, const TrainConfig& cfg);

// Analytic loss + gradients for one batch. Gradients are averaged the same
// way the loss is. Gate gradients require every module to carry a gate.
struct BatchGrads {
    double loss = 0.0;
    std::vector<Mat> a_grad;
    std::vector<Mat> b_grad;
    std::vector<Vec> gate_grad;
};

BatchGrads lora_loss_and_grads(const ToyBaseModel& base, const ExpertModel& expert,
                               const std::vector<Sample>& batch, bool gated, bool want_ab,
                               bool want_gate);

// Max relative error between the analytic gradient and central finite
// differences of `loss` around `params`. h must lie in [1e-6, 1e-3].
double grad_check(const std::function<double(const Vec&)>& loss, const Vec& params,
                  const Vec& analytic_grad, double h);

// FNV-1a over the raw IEEE-754 bytes; freeze-contract checksums.
std::uint64_t checksum(const std::vector<double>& values);
std::uint64_t base_checksum(const ToyBaseModel& model);
std::uint64_t ab_checksum(const ExpertModel& expert);

} // namespace glider
