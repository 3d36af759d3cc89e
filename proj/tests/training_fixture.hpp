#pragma once

// Tiny networks and data for training tests.

#include <memory>
#include <vector>

#include "deoccl/training.hpp"

namespace testing_support {

inline std::vector<deoccl::Sample> face_samples(int count, int size, std::uint64_t seed0 = 100, int appearance = 0) {
  using namespace deoccl;
  SyntheticLandmarkProvider provider;
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    const ImageTensor img = render_synthetic_face(size, seed0 + i, appearance);
    const BinaryMask mask = synthesize_hmd_mask(*provider.detect(img), {}, size, size);
    out.push_back(make_sample(img, mask, -1.0f, "toy/" + std::to_string(i), "toy"));
  }
  return out;
}

inline std::shared_ptr<deoccl::MemorySource> face_source(int count, int size, std::uint64_t seed0 = 100) {
  return std::make_shared<deoccl::MemorySource>(face_samples(count, size, seed0));
}

// Every stage one epoch of `passes` passes; 16x16 input, m = 4, bottleneck 8.
inline deoccl::TrainState tiny_state(std::uint64_t seed = 1, std::size_t batch = 4, int passes = 1,
                                     bool batch_norm = true) {
  using namespace deoccl;
  TrainConfig tc;
  tc.schedule = default_schedule(0.001);
  tc.batch_size = batch;
  tc.seed = seed;
  tc.passes_per_epoch = passes;
  tc.adam.learning_rate = 1e-3;
  return TrainState::create(NetworkConfig::scaled(16, 4, 8, batch_norm), tc);
}

}  // namespace testing_support
