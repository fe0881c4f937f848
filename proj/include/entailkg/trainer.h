#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "entailkg/config.h"
#include "entailkg/decoder.h"
#include "entailkg/entail_index.h"
#include "entailkg/graph.h"
#include "entailkg/losses.h"
#include "entailkg/optimizer.h"

namespace entailkg {

// alternating: a triplet step (l1 + gamma1 l2, all parameters) followed by a
//              contrast step (gamma2 lc, entity rows only) per batch.
// joint:       one step on l1 + gamma1 l2 + gamma2 lc per batch.
enum class Schedule : std::uint8_t { alternating = 0, joint = 1 };
// Granularity of the alternating schedule: per optimizer step, or whole
// epochs (even epochs triplet steps, odd epochs contrast steps).
enum class Alternation : std::uint8_t { step = 0, epoch = 1 };

struct TrainConfig {
    double lr = 5e-5;
    std::size_t batch_size = 128;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    LossConfig loss;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t eval_every = 0;  // epochs between validation passes; 0 disables
    std::size_t patience = 20;   // validation passes without MRR improvement before stopping
    Schedule schedule = Schedule::alternating;
    Alternation alternation = Alternation::step;
    double grad_clip = 0.0;      // global-norm clip; 0 disables

    // decoder
    std::size_t dim = 1024;
    std::size_t kernels = 200;
    std::size_t kernel_width = 5;
    Padding padding = Padding::right;
    double dropout = 0.0;
    float entity_init_scale = 0.1f;
    float relation_init_scale = 0.1f;
    std::string entity_init;     // optional EKGE file for the entity table

    unsigned threads = 0;        // 0 = hardware concurrency
    bool bitwise_repro = true;   // fixed-order gradient reduction regardless of threads

    AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
    bool uses_entailment() const { return loss.gamma1 > 0.0 || loss.gamma2 > 0.0; }
    // Throws std::invalid_argument describing the first violated constraint.
    void validate() const;
};

TrainConfig parse_train_config(const KeyValueConfig& kv);
TrainConfig load_train_config(const std::filesystem::path& path);
// Every field as `key = value` lines; parse_train_config round-trips it.
std::string format_train_config(const TrainConfig& cfg);
// Applies one `key = value` pair; returns false for unknown keys.
bool apply_train_option(TrainConfig& cfg, const ConfigEntry& entry, const std::string& file);

DecoderShape decoder_shape(const TrainConfig& cfg, const Graph& g);

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based index of the finished epoch
    double l1 = 0.0;
    double l2 = 0.0;
    double lc = 0.0;
    double loss = 0.0;      // combined l1 + gamma1 l2 + gamma2 lc
    std::size_t triplet_steps = 0;
    std::size_t contrast_steps = 0;
    std::optional<double> valid_mrr;
};

std::string to_json_line(const EpochMetrics& m);

// Everything needed to continue training bit-for-bit.
struct TrainingState {
    DecoderParams params;
    AdamState adam;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;            // completed epochs
    std::uint64_t optimizer_steps = 0;
    // early stopping progress
    double best_mrr = -1.0;
    std::size_t best_epoch = 0;
    std::size_t evals_since_best = 0;

    bool operator==(const TrainingState&) const = default;
};

// Loads cfg.entity_init when set and no matrix is passed.
TrainingState init_training(const Graph& g, const TrainConfig& cfg, const EmbeddingMatrix* entity_init = nullptr);

// (h, r) groups of one epoch in batch order; a pure function of (seed, epoch).
std::vector<Query> epoch_order(const LabelIndex& labels, std::uint64_t seed, std::size_t epoch);

// One pass over the shuffled (h, r) groups of the train split.
EpochMetrics train_epoch(const LabelIndex& labels, const EntailIndex* index, const TrainConfig& cfg,
                         TrainingState& state);
EpochMetrics train_epoch(const Graph& g, const EntailIndex* index, const TrainConfig& cfg, TrainingState& state);

struct FitHooks {
    // Returns validation MRR; called every cfg.eval_every epochs when set.
    std::function<double(const DecoderParams&)> validate;
    std::function<void(const EpochMetrics&)> on_epoch;
    // Called when validation MRR improves.
    std::function<void(const TrainingState&)> on_best;
    // Called after every epoch with the state to persist.
    std::function<void(const TrainingState&)> on_checkpoint;
};

struct FitResult {
    std::size_t epochs_run = 0;  // epochs run by this call
    bool stopped_early = false;
    std::vector<EpochMetrics> history;
};

// Trains until cfg.epochs epochs are complete, early stopping triggers, or
// max_new_epochs epochs have been run by this call.
FitResult fit(const Graph& g, const EntailIndex* index, const TrainConfig& cfg, TrainingState& state,
              const FitHooks& hooks = {}, std::optional<std::size_t> max_new_epochs = std::nullopt);

// Checkpoint file ("EKGC-CKPT"): magic, u16 version, shape (N, relations
// with inverses, d, K, W as u32; padding u8), the four parameter tensors as
// float32, training progress, then optionally the Adam moments.
void save_checkpoint(const TrainingState& state, std::ostream& out, bool include_optimizer = true);
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path, bool include_optimizer = true);
// Throws FormatError on corruption and InputError when the stored shape
// differs from `expected`.
TrainingState load_checkpoint(std::istream& in, const std::optional<DecoderShape>& expected = std::nullopt);
TrainingState load_checkpoint(const std::filesystem::path& path,
                              const std::optional<DecoderShape>& expected = std::nullopt);

}  // namespace entailkg
