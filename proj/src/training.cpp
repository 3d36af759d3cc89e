#include "deoccl/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "deoccl/random.hpp"

namespace deoccl {

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::generic_corpus: return "generic-corpus";
    case DataSource::user_unoccluded: return "user-unoccluded";
    case DataSource::user_occluded: return "user-occluded";
  }
  return "?";
}

std::string to_string(TrainPhase p) {
  switch (p) {
    case TrainPhase::generic: return "generic";
    case TrainPhase::user: return "user";
    case TrainPhase::occluded: return "occluded";
    case TrainPhase::finished: return "finished";
  }
  return "?";
}

void StageSpec::validate() const {
  require(step == 1 || step == 2, ErrorKind::config, "stage '" + name + "': step must be 1 or 2");
  require(epochs >= 1, ErrorKind::config, "stage '" + name + "': epochs must be >= 1");
  require(active_losses.contains(LossTerm::rec) || active_losses.contains(LossTerm::mask), ErrorKind::config,
          "stage '" + name + "' has no reconstruction term");
  if (step == 1) {
    require(forward_mode == ForwardMode::bypass, ErrorKind::config, "step-1 stage '" + name + "' must bypass attention");
    require(!trainable_groups.contains(Group::attention), ErrorKind::config,
            "step-1 stage '" + name + "' must keep attention frozen");
    require(!active_losses.contains(LossTerm::mask), ErrorKind::config,
            "step-1 stage '" + name + "' cannot use the mask loss");
    require(data_source != DataSource::user_occluded, ErrorKind::config,
            "step-1 stage '" + name + "' trains on unoccluded data");
  } else {
    require(forward_mode == ForwardMode::attention, ErrorKind::config,
            "step-2 stage '" + name + "' must use attention");
    require(active_losses.contains(LossTerm::mask), ErrorKind::config,
            "step-2 stage '" + name + "' must use the mask loss");
    require(data_source == DataSource::user_occluded, ErrorKind::config,
            "step-2 stage '" + name + "' trains on occluded samples");
  }
  require(active_losses.contains(LossTerm::adv) == trainable_groups.contains(Group::discriminator),
          ErrorKind::config, "stage '" + name + "': the discriminator trains exactly when adv is active");
}

std::vector<StageSpec> default_schedule(double epoch_scale) {
  require(epoch_scale > 0.0 && std::isfinite(epoch_scale), ErrorKind::config, "epoch scale must be > 0");
  auto scaled = [&](int epochs) { return std::max(1, static_cast<int>(std::lround(epochs * epoch_scale))); };
  const GroupSet s1{Group::encoder, Group::decoder};
  const GroupSet s1_adv{Group::encoder, Group::decoder, Group::discriminator};
  const GroupSet s2{Group::encoder, Group::decoder, Group::attention};
  const GroupSet s2_adv{Group::encoder, Group::decoder, Group::attention, Group::discriminator};
  using L = LossTerm;
  const auto bypass = ForwardMode::bypass;
  const auto attention = ForwardMode::attention;
  return {
      {"1.rec", 1, {L::rec}, scaled(300), s1, bypass, DataSource::user_unoccluded},
      {"1.rec+adv", 1, {L::rec, L::adv}, scaled(100), s1_adv, bypass, DataSource::user_unoccluded},
      {"1.rec+adv+ssim", 1, {L::rec, L::adv, L::ssim}, scaled(300), s1_adv, bypass, DataSource::user_unoccluded},
      {"2.rec+mask", 2, {L::rec, L::mask}, scaled(300), s2, attention, DataSource::user_occluded},
      {"2.rec+mask+adv", 2, {L::rec, L::mask, L::adv}, scaled(100), s2_adv, attention, DataSource::user_occluded},
      {"2.rec+mask+adv+ssim", 2, {L::rec, L::mask, L::adv, L::ssim}, scaled(200), s2_adv, attention,
       DataSource::user_occluded},
  };
}

void TrainConfig::validate() const {
  require(!schedule.empty(), ErrorKind::config, "schedule is empty");
  require(batch_size >= 1, ErrorKind::config, "batch size must be >= 1");
  require(adam.learning_rate > 0.0, ErrorKind::config, "learning rate must be > 0");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0, ErrorKind::config,
          "Adam betas must lie in [0, 1)");
  require(adam.eps > 0.0, ErrorKind::config, "Adam epsilon must be > 0");
  require(checkpoint_every >= 0, ErrorKind::config, "checkpoint_every must be >= 0");
  require(passes_per_epoch >= 1, ErrorKind::config, "passes_per_epoch must be >= 1");
  require(occlusion_fill >= -1.0f && occlusion_fill <= 1.0f, ErrorKind::config, "occlusion fill must lie in [-1, 1]");
  weights.validate();
  int previous_step = 1;
  for (const auto& s : schedule) {
    s.validate();
    require(s.step >= previous_step, ErrorKind::config, "step-1 stages must precede step-2 stages");
    previous_step = s.step;
  }
}

// --- Optimiser --------------------------------------------------------------

void sync_moments(const ParameterStore<float>& params, AdamMoments& moments) {
  const auto& layout = params.layout();
  moments.resize(layout.size());
  for (ParamId id = 0; id < layout.size(); ++id) {
    const ParamSpec& spec = layout[id];
    if (!is_learnable(spec.kind) || !params.trainable(spec.group)) {
      moments[id].reset();
    } else if (!moments[id]) {
      moments[id] = AdamSlot{Tensor<float>(spec.shape), Tensor<float>(spec.shape), 0};
    }
  }
}

void optimizer_step(ParameterStore<float>& params, AdamMoments& moments, const Gradients<float>& grads,
                    GroupSet groups, const AdamConfig& config) {
  for (Group g : kAllGroups)
    require(!groups.contains(g) || params.trainable(g), ErrorKind::frozen_group,
            "parameter group '" + std::string(group_name(g)) + "' is frozen");
  const auto& layout = params.layout();
  require(grads.size() == layout.size(), ErrorKind::shape_mismatch, "gradient set does not match parameters");
  moments.resize(layout.size());
  for (ParamId id = 0; id < layout.size(); ++id) {
    const ParamSpec& spec = layout[id];
    if (!is_learnable(spec.kind) || !groups.contains(spec.group)) continue;
    Tensor<float>& value = params.value(id);
    const Tensor<float>& grad = grads[id];
    require_same_shape(grad.shape(), value.shape(), "gradient of " + spec.name);
    if (!moments[id]) moments[id] = AdamSlot{Tensor<float>(spec.shape), Tensor<float>(spec.shape), 0};
    AdamSlot& slot = *moments[id];
    slot.t += 1;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(slot.t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(slot.t));
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double m = config.beta1 * slot.m[i] + (1.0 - config.beta1) * g;
      const double v = config.beta2 * slot.v[i] + (1.0 - config.beta2) * g * g;
      slot.m[i] = static_cast<float>(m);
      slot.v[i] = static_cast<float>(v);
      const double update = config.learning_rate * (m / c1) / (std::sqrt(v / c2) + config.eps);
      value[i] = static_cast<float>(value[i] - update);
    }
  }
}

// --- State ------------------------------------------------------------------

TrainState TrainState::create(const NetworkConfig& network, const TrainConfig& config) {
  network.validate();
  config.validate();
  TrainState st;
  st.network = network;
  st.config = config;
  st.params = Model(network).init<float>(config.seed);
  st.moments.resize(st.params.size());
  return st;
}

std::string TrainState::stage_label(const HistoryRow& row) const {
  const std::string name =
      row.stage >= 0 && row.stage < static_cast<int>(config.schedule.size()) ? config.schedule[row.stage].name : "?";
  return to_string(row.phase) + "/" + name;
}

// --- Steps ------------------------------------------------------------------

LossBreakdown train_step(const Model& model, TrainState& st, const StageSpec& stage,
                         const std::vector<Sample>& batch) {
  require(!batch.empty(), ErrorKind::empty_input, "empty batch");
  const bool occluded = stage.data_source == DataSource::user_occluded;
  const LossSet active = stage.active_losses;
  std::vector<const ImageTensor*> inputs, targets;
  std::vector<const BinaryMask*> masks;
  for (const Sample& s : batch) {
    inputs.push_back(occluded ? &s.occluded : &s.ground_truth);
    targets.push_back(&s.ground_truth);
    masks.push_back(&s.mask);
  }
  const Tensor<float> x = stack_images<float>(inputs);
  const Tensor<float> gt = stack_images<float>(targets);
  const Generator& gen = model.generator();
  const Discriminator& disc = model.discriminator();
  auto& params = st.params;

  GeneratorTape<float> tape;
  const Tensor<float> x_rec = gen.forward(params, x, stage.forward_mode, Phase::train, &tape).x_rec;

  LossParts parts;
  if (active.contains(LossTerm::adv)) {
    DiscriminatorTape<float> real_tape, fake_tape;
    const Tensor<float> p_real = disc.forward(params, gt, Phase::train, &real_tape);
    const Tensor<float> p_fake = disc.forward(params, x_rec, Phase::train, &fake_tape);
    const auto adv = adv_loss_d(p_real, p_fake);
    Gradients<float> d_grads(params.layout());
    disc.backward(params, real_tape, adv.d_real, d_grads);
    disc.backward(params, fake_tape, adv.d_fake, d_grads);
    optimizer_step(params, st.moments, d_grads, GroupSet{Group::discriminator}, st.config.adam);
    disc.commit(params, real_tape);
    parts.adv_d = adv.value;
  }

  const LossWeights& w = st.config.weights;
  Tensor<float> d_xrec(x_rec.shape());
  auto accumulate = [&](const Tensor<float>& g, double weight) {
    for (std::size_t i = 0; i < d_xrec.size(); ++i) d_xrec[i] += static_cast<float>(weight) * g[i];
  };
  if (active.contains(LossTerm::rec)) {
    const auto l = rec_loss(x_rec, gt);
    parts.rec = l.value;
    accumulate(l.grad, w.rec);
  }
  if (active.contains(LossTerm::mask)) {
    const auto l = mask_loss(x_rec, gt, stack_masks<float>(masks));
    parts.mask = l.value;
    accumulate(l.grad, w.mask);
  }
  if (active.contains(LossTerm::ssim)) {
    const auto l = ssim_loss(x_rec, gt);
    parts.ssim = l.value;
    accumulate(l.grad, w.ssim);
  }
  if (active.contains(LossTerm::adv)) {
    DiscriminatorTape<float> fake_tape;
    const Tensor<float> p_fake = disc.forward(params, x_rec, Phase::train, &fake_tape);
    const auto l = adv_loss_g(p_fake);
    parts.adv_g = l.value;
    Tensor<float> d_prob = l.grad;
    for (std::size_t i = 0; i < d_prob.size(); ++i) d_prob[i] *= static_cast<float>(w.adv);
    // Discriminator parameter gradients from this pass are discarded.
    Gradients<float> scratch(params.layout());
    accumulate(disc.backward(params, fake_tape, d_prob, scratch), 1.0);
  }

  Gradients<float> g_grads(params.layout());
  gen.backward(params, tape, d_xrec, g_grads);
  GroupSet g_groups = stage.trainable_groups;
  g_groups.erase(Group::discriminator);
  optimizer_step(params, st.moments, g_grads, g_groups, st.config.adam);
  gen.commit(params, tape);
  return total_loss(parts, w, active);
}

namespace {

void save_into(const TrainState& st, const std::optional<std::filesystem::path>& dir, const std::string& name) {
  if (!dir) return;
  std::filesystem::create_directories(*dir);
  save_checkpoint(st, *dir / name);
}

int first_stage_of_step(const TrainConfig& config, int step) {
  for (std::size_t i = 0; i < config.schedule.size(); ++i)
    if (config.schedule[i].step == step) return static_cast<int>(i);
  return static_cast<int>(config.schedule.size());
}

RunStatus run_phase(TrainState& st, TrainPhase phase, std::shared_ptr<const FrameSource> source,
                    const TrainHooks& hooks) {
  require(source && source->size() > 0, ErrorKind::empty_input, "no training frames for the " + to_string(phase) + " phase");
  st.config.validate();
  const Model model(st.network);
  model.check(st.params);
  const auto started = std::chrono::steady_clock::now();
  const int step = phase == TrainPhase::occluded ? 2 : 1;
  Cursor& cur = st.cursor;
  cur.stage = std::max(cur.stage, first_stage_of_step(st.config, step));

  const std::uint64_t per_pass = (source->size() + st.config.batch_size - 1) / st.config.batch_size;
  const std::uint64_t per_epoch = per_pass * static_cast<std::uint64_t>(st.config.passes_per_epoch);

  while (cur.phase == phase && cur.stage < static_cast<int>(st.config.schedule.size()) &&
         st.config.schedule[cur.stage].step == step) {
    StageSpec stage = st.config.schedule[cur.stage];
    if (phase == TrainPhase::generic) stage.data_source = DataSource::generic_corpus;
    st.params.set_trainable_groups(stage.trainable_groups);
    sync_moments(st.params, st.moments);

    while (cur.epoch < stage.epochs) {
      std::optional<BatchIterator> it;
      while (cur.batch < per_epoch) {
        if (hooks.stop_at_step && cur.step >= *hooks.stop_at_step) return RunStatus::paused;
        const std::uint64_t pass = cur.batch / per_pass;
        const std::uint64_t within = cur.batch % per_pass;
        if (!it || within == 0) {
          const std::uint64_t key = mix_seed(
              mix_seed(mix_seed(static_cast<std::uint64_t>(phase), static_cast<std::uint64_t>(cur.stage)),
                       static_cast<std::uint64_t>(cur.epoch)),
              pass);
          it.emplace(source, st.config.batch_size, st.config.seed, key, true);
          it->skip(within);
        }
        const auto batch = it->next();
        require(batch.has_value(), ErrorKind::precondition, "batch iterator ended early");
        HistoryRow row{cur.step, phase, cur.stage, cur.epoch, train_step(model, st, stage, *batch)};
        cur.batch += 1;
        cur.step += 1;
        st.history.push_back(row);
        if (hooks.on_step) hooks.on_step(st, row);
      }
      cur.epoch += 1;
      cur.batch = 0;
      if (st.config.checkpoint_every > 0 && cur.epoch % st.config.checkpoint_every == 0)
        save_into(st, hooks.checkpoint_dir, "latest.ckpt");
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    StageBoundary boundary{phase, cur.stage, stage.name, cur.step, wall};
    st.boundaries.push_back(boundary);
    cur.stage += 1;
    cur.epoch = 0;
    cur.batch = 0;
    if (cur.stage >= static_cast<int>(st.config.schedule.size()) || st.config.schedule[cur.stage].step != step) {
      cur.phase = phase == TrainPhase::generic ? TrainPhase::user
                  : phase == TrainPhase::user  ? TrainPhase::occluded
                                               : TrainPhase::finished;
      cur.stage = cur.phase == TrainPhase::user       ? first_stage_of_step(st.config, 1)
                  : cur.phase == TrainPhase::occluded ? first_stage_of_step(st.config, 2)
                                                      : cur.stage;
    }
    save_into(st, hooks.checkpoint_dir,
              "stage-" + to_string(phase) + "-" + std::to_string(boundary.stage) + ".ckpt");
    save_into(st, hooks.checkpoint_dir, "latest.ckpt");
    if (hooks.on_stage_end) hooks.on_stage_end(st, boundary);
  }
  return RunStatus::completed;
}

}  // namespace

RunStatus pretrain_generic(TrainState& state, std::shared_ptr<const FrameSource> corpus, const TrainHooks& hooks) {
  require(state.cursor.phase == TrainPhase::generic, ErrorKind::precondition,
          "generic pretraining must run first (cursor is in the " + to_string(state.cursor.phase) + " phase)");
  return run_phase(state, TrainPhase::generic, std::move(corpus), hooks);
}

RunStatus finetune_user(TrainState& state, std::shared_ptr<const FrameSource> train_frames,
                        const TrainHooks& hooks) {
  if (state.cursor.phase == TrainPhase::generic && state.cursor.epoch == 0 && state.cursor.batch == 0) {
    state.cursor.phase = TrainPhase::user;
    state.cursor.stage = first_stage_of_step(state.config, 1);
  }
  require(state.cursor.phase == TrainPhase::user, ErrorKind::precondition,
          "user finetuning needs a state in the user phase (cursor is in the " + to_string(state.cursor.phase) +
              " phase)");
  return run_phase(state, TrainPhase::user, std::move(train_frames), hooks);
}

RunStatus finetune_user(TrainState& state, const DatasetSplit& split, const TrainHooks& hooks) {
  return finetune_user(state, std::make_shared<SplitSource>(split, SplitRole::train, state.config.occlusion_fill),
                       hooks);
}

RunStatus train_occluded(TrainState& state, std::shared_ptr<const FrameSource> train_samples,
                         const TrainHooks& hooks) {
  require(state.cursor.phase == TrainPhase::occluded, ErrorKind::precondition,
          "occluded training needs step 1 to be complete (cursor is in the " + to_string(state.cursor.phase) +
              " phase)");
  return run_phase(state, TrainPhase::occluded, std::move(train_samples), hooks);
}

RunStatus train_occluded(TrainState& state, const DatasetSplit& split, const TrainHooks& hooks) {
  return train_occluded(state, std::make_shared<SplitSource>(split, SplitRole::train, state.config.occlusion_fill),
                        hooks);
}

// --- Reporting --------------------------------------------------------------

namespace {

nlohmann::json loss_json(const LossBreakdown& l) {
  nlohmann::json j{{"active", to_string(l.active)}, {"total", l.total}};
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("rec", l.parts.rec);
  put("adv_g", l.parts.adv_g);
  put("adv_d", l.parts.adv_d);
  put("ssim", l.parts.ssim);
  put("mask", l.parts.mask);
  return j;
}

}  // namespace

nlohmann::json run_summary(const TrainState& st) {
  nlohmann::json boundaries = nlohmann::json::array();
  for (const auto& b : st.boundaries)
    boundaries.push_back({{"phase", to_string(b.phase)},
                          {"stage", b.stage},
                          {"name", b.name},
                          {"step", b.step},
                          {"wall_seconds", b.wall_seconds}});
  nlohmann::json schedule = nlohmann::json::array();
  for (const auto& s : st.config.schedule)
    schedule.push_back({{"name", s.name},
                        {"step", s.step},
                        {"losses", to_string(s.active_losses)},
                        {"epochs", s.epochs},
                        {"trainable", to_string(s.trainable_groups)},
                        {"mode", to_string(s.forward_mode)}});
  nlohmann::json j{
      {"stage_boundaries", boundaries},
      {"schedule", schedule},
      {"cursor",
       {{"phase", to_string(st.cursor.phase)},
        {"stage", st.cursor.stage},
        {"epoch", st.cursor.epoch},
        {"batch", st.cursor.batch},
        {"step", st.cursor.step}}},
      {"steps_logged", st.history.size()},
      {"parameter_checksum", st.params.checksum()},
  };
  if (!st.history.empty()) j["final_loss"] = loss_json(st.history.back().loss);
  return j;
}

std::string training_log_csv(const TrainState& st) {
  std::ostringstream out;
  out << LossBreakdown::csv_header() << '\n';
  for (const auto& row : st.history) out << row.loss.csv_row(row.step, st.stage_label(row)) << '\n';
  return out.str();
}

}  // namespace deoccl
