#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "deoccl/imaging.hpp"

namespace deoccl {

namespace fs = std::filesystem;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct LandmarkSet {
  std::vector<Point> points;
  std::string schema_id;
  std::vector<int> eye_indices;

  // Points inside [0, width) x [0, height); eye_indices non-empty and valid.
  void validate(int width, int height) const;
};

enum class MaskShape { rectangle, rounded_rectangle };

std::string to_string(MaskShape s);
std::optional<MaskShape> parse_mask_shape(std::string_view s);

struct MaskSpec {
  double horizontal_margin = 0.15;  // fraction of eye-region width, each side
  double vertical_margin = 0.60;    // fraction of eye-region height, each side
  MaskShape shape = MaskShape::rectangle;

  void validate() const;
};

// mask = 1 on the eye-landmark bounding box expanded by the margins and
// clipped to the image; edges are floored to pixel indices, both inclusive.
// Throws degenerate_region when the eye box has zero width or height.
BinaryMask synthesize_hmd_mask(const LandmarkSet& landmarks, const MaskSpec& spec, int width, int height);

// --- Landmark providers -----------------------------------------------------

class LandmarkProvider {
 public:
  virtual ~LandmarkProvider() = default;
  virtual std::string name() const = 0;
  // nullopt when no face is found.
  virtual std::optional<LandmarkSet> detect(const ImageTensor& img) = 0;
};

// Fixed fractional positions within the frame: four points per eye
// (corners, upper and lower lid), nose tip and mouth centre.
class SyntheticLandmarkProvider final : public LandmarkProvider {
 public:
  static constexpr const char* kSchema = "synthetic-10";
  std::string name() const override { return "synthetic"; }
  std::optional<LandmarkSet> detect(const ImageTensor& img) override;
};

using LandmarkProviderFactory = std::function<std::shared_ptr<LandmarkProvider>()>;

// Name -> factory. "synthetic" is always registered.
class LandmarkProviderRegistry {
 public:
  static LandmarkProviderRegistry& instance();
  void add(const std::string& name, LandmarkProviderFactory factory);
  // Throws provider_unavailable for unknown names.
  std::shared_ptr<LandmarkProvider> create(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  LandmarkProviderRegistry();
  mutable std::mutex mutex_;
  std::map<std::string, LandmarkProviderFactory> factories_;
};

// Throws no_face when the provider finds nothing, provider_unavailable on a
// null provider.
LandmarkSet detect_landmarks(const ImageTensor& img, LandmarkProvider* provider);

// Per-frame cache in front of a provider. Frames without a face are
// remembered and counted as skipped.
class LandmarkDetector {
 public:
  explicit LandmarkDetector(std::shared_ptr<LandmarkProvider> provider);

  std::optional<LandmarkSet> detect(const std::string& frame_id, const ImageTensor& img);
  std::size_t skipped() const { return skipped_.load(); }

 private:
  std::shared_ptr<LandmarkProvider> provider_;
  std::mutex mutex_;
  std::map<std::string, std::optional<LandmarkSet>> cache_;
  std::atomic<std::size_t> skipped_{0};
};

// Procedural face-like test image in signed range: background, head, hair,
// eyes with gaze, brows, nose and mouth. `seed` varies pose and expression
// within one appearance; `appearance` changes colours. The eyes sit where
// SyntheticLandmarkProvider places its eye points.
ImageTensor render_synthetic_face(int size, std::uint64_t seed, int appearance = 0);

// --- Samples and sessions ---------------------------------------------------

struct Sample {
  ImageTensor occluded;
  BinaryMask mask;
  ImageTensor ground_truth;
  std::string frame_id;
  std::string session_id;

  // occluded == ground_truth wherever mask == 0, shared extents.
  void validate() const;
};

Sample make_sample(const ImageTensor& gt, const BinaryMask& mask, float fill,
                   std::string frame_id = {}, std::string session_id = {});

struct SessionManifest {
  static constexpr const char* kHeader = "deoccl-manifest v1";

  std::string subject_id;
  std::string session_id;
  std::string appearance_tag;
  int frame_count = 0;
  std::vector<std::string> frame_paths;  // relative to `directory`
  fs::path directory;                     // not serialised

  std::string key() const { return subject_id + "/" + session_id; }
  std::string frame_id(std::size_t i) const;
  fs::path frame_path(std::size_t i) const { return directory / frame_paths[i]; }
  // masks/<name> for frames/<name>
  fs::path mask_path(std::size_t i) const;

  void validate(bool check_paths) const;
  std::string serialize() const;
  static SessionManifest parse(const std::string& text, const fs::path& directory);
  static SessionManifest read(const fs::path& manifest_file);
  void write() const;
};

struct IngestOptions {
  std::optional<Rect> face_box;
  bool allow_upscale = true;
};

// Frames (*.png, filename order) from frames_dir are resize-cropped into
// <data_root>/<subject>/<session>/frames/%06d.png and listed in manifest.txt.
SessionManifest ingest_session(const fs::path& frames_dir, const fs::path& data_root,
                               const std::string& subject_id, const std::string& session_id,
                               const std::string& appearance_tag, int target_size,
                               const IngestOptions& options = {});

struct MaskingReport {
  std::size_t masked = 0;
  std::size_t skipped = 0;
};

// Writes masks/%06d.png for every frame with a face; frames without one (or
// with a degenerate eye region) are removed and the manifest rewritten.
MaskingReport synthesize_session_masks(SessionManifest& manifest, LandmarkDetector& detector,
                                       const MaskSpec& spec);

// Every <root>/<subject>/<session>/manifest.txt, sorted by path.
std::vector<SessionManifest> discover_sessions(const fs::path& data_root);

struct DatasetSplit {
  std::vector<SessionManifest> train_sessions;
  std::vector<SessionManifest> test_sessions;

  void validate() const;
  // Stable textual description (for report compatibility checks).
  std::string descriptor() const;
};

// Held-out appearance tags go to test. With no tags given, each subject's
// lexicographically last appearance is held out.
struct AppearanceHoldout {
  std::set<std::string> tags;
};

DatasetSplit split_sessions(const std::vector<SessionManifest>& manifests,
                            const AppearanceHoldout& policy = {});

// --- Frame sources and batching ---------------------------------------------

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t size() const = 0;
  virtual Sample load(std::size_t index) const = 0;
  virtual std::string frame_id(std::size_t index) const = 0;
};

class MemorySource final : public FrameSource {
 public:
  explicit MemorySource(std::vector<Sample> samples);
  // Unoccluded images with an empty mask (for autoencoding corpora).
  static MemorySource from_images(const std::vector<ImageTensor>& images);

  std::size_t size() const override { return samples_.size(); }
  Sample load(std::size_t index) const override { return samples_.at(index); }
  std::string frame_id(std::size_t index) const override { return samples_.at(index).frame_id; }
  const std::vector<Sample>& samples() const { return samples_; }

 private:
  std::vector<Sample> samples_;
};

enum class SplitRole { train, test };

// Frames of one split role, decoded from disk on demand (signed range).
class SplitSource final : public FrameSource {
 public:
  SplitSource(const DatasetSplit& split, SplitRole role, float fill);

  std::size_t size() const override { return frames_.size(); }
  Sample load(std::size_t index) const override;
  std::string frame_id(std::size_t index) const override { return frames_.at(index).frame_id; }

  // Loads everything into memory.
  MemorySource materialize() const;

 private:
  struct FrameRef {
    fs::path frame;
    fs::path mask;
    std::string frame_id;
    std::string session_id;
  };
  std::vector<FrameRef> frames_;
  float fill_;
};

// One epoch over a source. Shuffled order is a permutation derived from
// (seed, epoch); unshuffled order is source order. The last batch may be short.
class BatchIterator {
 public:
  BatchIterator(std::shared_ptr<const FrameSource> source, std::size_t batch_size,
                std::uint64_t seed, std::uint64_t epoch, bool shuffle);

  std::optional<std::vector<Sample>> next();
  void skip(std::size_t batches);
  std::size_t batch_count() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  std::shared_ptr<const FrameSource> source_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// Train role is shuffled, test role is in manifest order.
BatchIterator batch_iter(std::shared_ptr<const FrameSource> source, SplitRole role,
                         std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);
BatchIterator batch_iter(const DatasetSplit& split, SplitRole role, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch, float fill = -1.0f);

}  // namespace deoccl
