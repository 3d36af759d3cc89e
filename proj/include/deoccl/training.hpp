#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deoccl/dataset.hpp"
#include "deoccl/losses.hpp"
#include "deoccl/network.hpp"
#include "json.hpp"

namespace deoccl {

enum class DataSource : std::uint8_t { generic_corpus = 0, user_unoccluded = 1, user_occluded = 2 };

std::string to_string(DataSource s);

struct StageSpec {
  std::string name;
  int step = 1;
  LossSet active_losses;
  int epochs = 1;
  GroupSet trainable_groups;
  ForwardMode forward_mode = ForwardMode::bypass;
  DataSource data_source = DataSource::user_unoccluded;

  // Step 1: bypass, attention frozen, no mask loss. Step 2: attention mode
  // with the mask loss.
  void validate() const;
  bool operator==(const StageSpec&) const = default;
};

// Six stages, 300/100/300 epochs for step 1 and 300/100/200 for step 2, each
// count multiplied by epoch_scale and rounded (at least 1).
std::vector<StageSpec> default_schedule(double epoch_scale = 1.0);

struct AdamConfig {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

struct TrainConfig {
  std::vector<StageSpec> schedule = default_schedule();
  std::size_t batch_size = 50;
  AdamConfig adam;
  LossWeights weights;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;   // epochs; 0 writes only at stage boundaries
  int passes_per_epoch = 1;   // shuffled passes over the data per epoch
  float occlusion_fill = -1.0f;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct AdamSlot {
  Tensor<float> m;
  Tensor<float> v;
  std::uint64_t t = 0;
};

using AdamMoments = std::vector<std::optional<AdamSlot>>;

// Adam update of every learnable parameter in `groups`. Throws frozen_group
// when a group is not trainable and shape_mismatch on a gradient/parameter
// disagreement.
void optimizer_step(ParameterStore<float>& params, AdamMoments& moments, const Gradients<float>& grads,
                    GroupSet groups, const AdamConfig& config);

// Drops moments of frozen groups and creates zero moments for trainable ones.
void sync_moments(const ParameterStore<float>& params, AdamMoments& moments);

enum class TrainPhase : std::uint8_t { generic = 0, user = 1, occluded = 2, finished = 3 };

std::string to_string(TrainPhase p);

struct Cursor {
  TrainPhase phase = TrainPhase::generic;
  int stage = 0;            // index into the schedule
  int epoch = 0;            // within the stage
  std::uint64_t batch = 0;  // batches done in the current epoch, across passes
  std::uint64_t step = 0;   // global optimisation steps
  bool operator==(const Cursor&) const = default;
};

struct HistoryRow {
  std::uint64_t step = 0;
  TrainPhase phase = TrainPhase::generic;
  int stage = 0;
  int epoch = 0;
  LossBreakdown loss;
};

struct StageBoundary {
  TrainPhase phase = TrainPhase::generic;
  int stage = 0;
  std::string name;
  std::uint64_t step = 0;
  double wall_seconds = 0.0;
};

// Everything needed to continue training. Shuffling derives from the seed and
// the cursor, so no generator state is stored separately.
struct TrainState {
  NetworkConfig network;
  TrainConfig config;
  ParameterStore<float> params;
  AdamMoments moments;
  Cursor cursor;
  std::vector<HistoryRow> history;
  std::vector<StageBoundary> boundaries;

  static TrainState create(const NetworkConfig& network, const TrainConfig& config);

  // "generic/1.rec" style label of a history row.
  std::string stage_label(const HistoryRow& row) const;
};

struct TrainHooks {
  std::function<void(const TrainState&, const HistoryRow&)> on_step;
  std::function<void(const TrainState&, const StageBoundary&)> on_stage_end;
  // Pause once the global step counter reaches this value.
  std::optional<std::uint64_t> stop_at_step;
  // latest.ckpt every checkpoint_every epochs plus one file per stage boundary.
  std::optional<std::filesystem::path> checkpoint_dir;
};

enum class RunStatus { completed, paused };

// One generator update (preceded by one discriminator update when adv is
// active) on a batch.
LossBreakdown train_step(const Model& model, TrainState& state, const StageSpec& stage,
                         const std::vector<Sample>& batch);

// Step-1 stages autoencoding a generic face corpus.
RunStatus pretrain_generic(TrainState& state, std::shared_ptr<const FrameSource> corpus,
                           const TrainHooks& hooks = {});
// Step-1 stages on the user's unoccluded training frames. Starts the user
// phase when called on a state that skipped generic pretraining.
RunStatus finetune_user(TrainState& state, std::shared_ptr<const FrameSource> train_frames,
                        const TrainHooks& hooks = {});
RunStatus finetune_user(TrainState& state, const DatasetSplit& split, const TrainHooks& hooks = {});
// Step-2 stages on occluded samples. Throws precondition unless step 1 is done.
RunStatus train_occluded(TrainState& state, std::shared_ptr<const FrameSource> train_samples,
                         const TrainHooks& hooks = {});
RunStatus train_occluded(TrainState& state, const DatasetSplit& split, const TrainHooks& hooks = {});

inline constexpr const char* kCheckpointHeader = "deoccl-ckpt v1";

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
// With `expected`, every parameter shape is validated against that network.
TrainState load_checkpoint(const std::filesystem::path& path, const NetworkConfig* expected = nullptr);

// Per-stage boundaries, final cursor and loss summary.
nlohmann::json run_summary(const TrainState& state);
std::string training_log_csv(const TrainState& state);

}  // namespace deoccl
