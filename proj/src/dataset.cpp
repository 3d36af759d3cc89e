#include "deoccl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "deoccl/random.hpp"

namespace deoccl {

// --- Landmarks and masks ----------------------------------------------------

void LandmarkSet::validate(int width, int height) const {
  require(!eye_indices.empty(), ErrorKind::precondition, "landmark set has no eye indices");
  for (int idx : eye_indices)
    require(idx >= 0 && static_cast<std::size_t>(idx) < points.size(), ErrorKind::precondition,
            "eye index " + std::to_string(idx) + " out of range");
  for (const Point& p : points)
    require(p.x >= 0 && p.y >= 0 && p.x < width && p.y < height, ErrorKind::precondition,
            "landmark outside image bounds");
}

std::string to_string(MaskShape s) {
  return s == MaskShape::rectangle ? "rectangle" : "rounded-rectangle";
}

std::optional<MaskShape> parse_mask_shape(std::string_view s) {
  if (s == "rectangle") return MaskShape::rectangle;
  if (s == "rounded-rectangle") return MaskShape::rounded_rectangle;
  return std::nullopt;
}

void MaskSpec::validate() const {
  require(horizontal_margin >= 0.0 && horizontal_margin <= 1.5 && vertical_margin >= 0.0 &&
              vertical_margin <= 1.5,
          ErrorKind::config, "mask margins must lie in [0, 1.5]");
}

BinaryMask synthesize_hmd_mask(const LandmarkSet& landmarks, const MaskSpec& spec, int width,
                               int height) {
  spec.validate();
  landmarks.validate(width, height);
  double min_x = landmarks.points[landmarks.eye_indices[0]].x, max_x = min_x;
  double min_y = landmarks.points[landmarks.eye_indices[0]].y, max_y = min_y;
  for (int idx : landmarks.eye_indices) {
    const Point& p = landmarks.points[idx];
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double eye_w = max_x - min_x;
  const double eye_h = max_y - min_y;
  require(eye_w > 0.0 && eye_h > 0.0, ErrorKind::degenerate_region,
          "eye region has zero area (" + std::to_string(eye_w) + " x " + std::to_string(eye_h) + ")");

  const double margin_x = spec.horizontal_margin * eye_w;
  const double margin_y = spec.vertical_margin * eye_h;
  const double left = min_x - margin_x, right = max_x + margin_x;
  const double top = min_y - margin_y, bottom = max_y + margin_y;
  const int x0 = std::max(0, static_cast<int>(std::floor(left)));
  const int x1 = std::min(width - 1, static_cast<int>(std::floor(right)));
  const int y0 = std::max(0, static_cast<int>(std::floor(top)));
  const int y1 = std::min(height - 1, static_cast<int>(std::floor(bottom)));

  // Corner radius never exceeds the margins, so the eye box is never cut.
  const double radius = spec.shape == MaskShape::rounded_rectangle ? std::min(margin_x, margin_y) : 0.0;

  BinaryMask mask(height, width);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      bool inside = true;
      if (radius > 0.0) {
        const double cx = std::clamp(static_cast<double>(x), left + radius, right - radius);
        const double cy = std::clamp(static_cast<double>(y), top + radius, bottom - radius);
        const double dx = x - cx, dy = y - cy;
        inside = dx * dx + dy * dy <= radius * radius;
      }
      if (inside) mask.at(y, x) = 1.0f;
    }
  }
  return mask;
}

std::optional<LandmarkSet> SyntheticLandmarkProvider::detect(const ImageTensor& img) {
  static constexpr double kFractions[10][2] = {
      {0.300, 0.400}, {0.430, 0.400}, {0.365, 0.370}, {0.365, 0.430},  // left eye
      {0.570, 0.400}, {0.700, 0.400}, {0.635, 0.370}, {0.635, 0.430},  // right eye
      {0.500, 0.560}, {0.500, 0.720}};                                 // nose, mouth
  LandmarkSet set;
  set.schema_id = kSchema;
  const double w = img.width() - 1;
  const double h = img.height() - 1;
  for (const auto& f : kFractions) set.points.push_back({f[0] * w, f[1] * h});
  set.eye_indices = {0, 1, 2, 3, 4, 5, 6, 7};
  return set;
}

LandmarkProviderRegistry::LandmarkProviderRegistry() {
  factories_["synthetic"] = [] { return std::make_shared<SyntheticLandmarkProvider>(); };
}

LandmarkProviderRegistry& LandmarkProviderRegistry::instance() {
  static LandmarkProviderRegistry registry;
  return registry;
}

void LandmarkProviderRegistry::add(const std::string& name, LandmarkProviderFactory factory) {
  std::lock_guard lock(mutex_);
  factories_[name] = std::move(factory);
}

std::shared_ptr<LandmarkProvider> LandmarkProviderRegistry::create(const std::string& name) const {
  std::lock_guard lock(mutex_);
  auto it = factories_.find(name);
  require(it != factories_.end(), ErrorKind::provider_unavailable,
          "no landmark provider registered as '" + name + "'");
  auto provider = it->second();
  require(provider != nullptr, ErrorKind::provider_unavailable, "landmark provider '" + name + "' failed to start");
  return provider;
}

std::vector<std::string> LandmarkProviderRegistry::names() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

LandmarkSet detect_landmarks(const ImageTensor& img, LandmarkProvider* provider) {
  require(provider != nullptr, ErrorKind::provider_unavailable, "no landmark provider");
  auto result = provider->detect(img);
  require(result.has_value(), ErrorKind::no_face, "no face found by provider " + provider->name());
  return *std::move(result);
}

LandmarkDetector::LandmarkDetector(std::shared_ptr<LandmarkProvider> provider)
    : provider_(std::move(provider)) {
  require(provider_ != nullptr, ErrorKind::provider_unavailable, "no landmark provider");
}

std::optional<LandmarkSet> LandmarkDetector::detect(const std::string& frame_id, const ImageTensor& img) {
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(frame_id); it != cache_.end()) return it->second;
  std::optional<LandmarkSet> result;
  try {
    result = detect_landmarks(img, provider_.get());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::no_face) throw;
    ++skipped_;
  }
  cache_.emplace(frame_id, result);
  return result;
}

// --- Synthetic faces --------------------------------------------------------

namespace {

struct Rgb {
  double r, g, b;
};

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Anti-aliased coverage of an axis-aligned ellipse (pixel units).
double ellipse_cover(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx, dy = (y - cy) / ry;
  const double d = std::sqrt(dx * dx + dy * dy);
  return std::clamp((1.0 - d) * std::min(rx, ry) + 0.5, 0.0, 1.0);
}

}  // namespace

ImageTensor render_synthetic_face(int size, std::uint64_t seed, int appearance) {
  require(size >= 8, ErrorKind::precondition, "synthetic face needs size >= 8");
  static const Rgb kBackgrounds[] = {{0.20, 0.35, 0.55}, {0.55, 0.50, 0.35}, {0.30, 0.45, 0.30}, {0.45, 0.30, 0.45}};
  static const Rgb kHair[] = {{0.15, 0.10, 0.08}, {0.45, 0.30, 0.15}, {0.08, 0.08, 0.08}, {0.60, 0.50, 0.30}};
  static const Rgb kShirts[] = {{0.70, 0.15, 0.15}, {0.15, 0.25, 0.60}, {0.85, 0.85, 0.85}, {0.20, 0.55, 0.35}};
  const int a = ((appearance % 4) + 4) % 4;
  Rng rng(mix_seed(seed, 0x66616365));
  const double jx = (rng.uniform() - 0.5) * 0.03;
  const double jy = (rng.uniform() - 0.5) * 0.03;
  const double mouth_open = rng.uniform();
  const double gaze = (rng.uniform() - 0.5) * 2.0;
  const double brow = (rng.uniform() - 0.5) * 2.0;

  const double s = size - 1;
  const Rgb skin{0.87, 0.68, 0.56};
  const Rgb white{0.95, 0.95, 0.95};
  const Rgb iris{0.18, 0.12, 0.08};
  const Rgb dark{0.20, 0.12, 0.10};
  const Rgb lips{0.65, 0.25, 0.25};

  ImageTensor img(3, size, size, ValueRange::unit);
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      const double x = px, y = py;
      Rgb c = mix(kBackgrounds[a], {kBackgrounds[a].r * 0.6, kBackgrounds[a].g * 0.6, kBackgrounds[a].b * 0.6}, y / s);
      c = mix(c, kShirts[a], std::clamp((y - 0.88 * s) * 0.5, 0.0, 1.0));
      c = mix(c, kHair[a], ellipse_cover(x, y, (0.5 + jx) * s, (0.30 + jy) * s, 0.34 * s, 0.24 * s));
      const double fx = (0.5 + jx) * s, fy = (0.54 + jy) * s;
      const double face = ellipse_cover(x, y, fx, fy, 0.29 * s, 0.38 * s) *
                          std::clamp((y - (0.27 + jy) * s) * 0.5, 0.0, 1.0);
      const double rr = std::pow((x - fx) / (0.29 * s), 2) + std::pow((y - fy) / (0.38 * s), 2);
      const double shade = 1.0 - 0.25 * std::min(1.0, rr);
      c = mix(c, {skin.r * shade, skin.g * shade, skin.b * shade}, face);
      for (double ex : {0.365, 0.635}) {
        const double cx = (ex + jx) * s, cy = (0.40 + jy) * s;
        c = mix(c, white, ellipse_cover(x, y, cx, cy, 0.060 * s, 0.030 * s));
        const double ix = cx + gaze * 0.025 * s;
        c = mix(c, iris, ellipse_cover(x, y, ix, cy, 0.024 * s, 0.024 * s) *
                             ellipse_cover(x, y, cx, cy, 0.060 * s, 0.030 * s));
        const double tilt = (ex < 0.5 ? 1.0 : -1.0) * brow * 0.04;
        const double by = cy - 0.055 * s + tilt * (x - cx);
        const double band = std::clamp(0.012 * s + 0.5 - std::abs(y - by), 0.0, 1.0) *
                            std::clamp(0.07 * s + 0.5 - std::abs(x - cx), 0.0, 1.0);
        c = mix(c, dark, band);
      }
      const double nose = std::clamp(0.008 * s + 0.5 - std::abs(x - (0.5 + jx) * s), 0.0, 1.0) *
                          std::clamp(0.06 * s + 0.5 - std::abs(y - (0.52 + jy) * s), 0.0, 1.0);
      c = mix(c, {skin.r * 0.7, skin.g * 0.7, skin.b * 0.7}, nose);
      c = mix(c, lips,
              ellipse_cover(x, y, (0.5 + jx) * s, (0.72 + jy) * s, 0.10 * s, (0.015 + 0.035 * mouth_open) * s));
      img.at(0, py, px) = static_cast<float>(std::clamp(c.r, 0.0, 1.0));
      img.at(1, py, px) = static_cast<float>(std::clamp(c.g, 0.0, 1.0));
      img.at(2, py, px) = static_cast<float>(std::clamp(c.b, 0.0, 1.0));
    }
  }
  return to_range(img, ValueRange::signed_unit);
}

// --- Samples ----------------------------------------------------------------

void Sample::validate() const {
  require(occluded.height() == ground_truth.height() && occluded.width() == ground_truth.width() &&
              occluded.channels() == ground_truth.channels() && mask.height() == ground_truth.height() &&
              mask.width() == ground_truth.width(),
          ErrorKind::shape_mismatch, "sample components differ in extent");
  for (int c = 0; c < ground_truth.channels(); ++c)
    for (int y = 0; y < ground_truth.height(); ++y)
      for (int x = 0; x < ground_truth.width(); ++x)
        if (mask.at(y, x) == 0.0f)
          require(occluded.at(c, y, x) == ground_truth.at(c, y, x), ErrorKind::precondition,
                  "occluded image differs from ground truth outside the mask");
}

Sample make_sample(const ImageTensor& gt, const BinaryMask& mask, float fill, std::string frame_id,
                   std::string session_id) {
  mask.validate();
  Sample s{apply_occlusion(gt, mask, fill), mask, gt, std::move(frame_id), std::move(session_id)};
  return s;
}

// --- Manifests --------------------------------------------------------------

std::string SessionManifest::frame_id(std::size_t i) const {
  return key() + "/" + fs::path(frame_paths.at(i)).stem().string();
}

fs::path SessionManifest::mask_path(std::size_t i) const {
  return directory / "masks" / fs::path(frame_paths.at(i)).filename();
}

void SessionManifest::validate(bool check_paths) const {
  require(!subject_id.empty() && !session_id.empty() && !appearance_tag.empty(), ErrorKind::config,
          "manifest needs subject_id, session_id and appearance_tag");
  require(frame_count == static_cast<int>(frame_paths.size()), ErrorKind::precondition,
          "manifest frame_count " + std::to_string(frame_count) + " disagrees with " +
              std::to_string(frame_paths.size()) + " listed frames");
  if (check_paths)
    for (std::size_t i = 0; i < frame_paths.size(); ++i)
      require(fs::exists(frame_path(i)), ErrorKind::file_missing, "missing frame " + frame_path(i).string());
}

std::string SessionManifest::serialize() const {
  std::ostringstream out;
  out << kHeader << '\n'
      << "subject_id=" << subject_id << '\n'
      << "session_id=" << session_id << '\n'
      << "appearance_tag=" << appearance_tag << '\n'
      << "frame_count=" << frame_count << '\n';
  for (const auto& p : frame_paths) out << p << '\n';
  return out.str();
}

SessionManifest SessionManifest::parse(const std::string& text, const fs::path& directory) {
  std::istringstream in(text);
  std::string line;
  require(std::getline(in, line) && line == kHeader, ErrorKind::decode_failed,
          "manifest header must be '" + std::string(kHeader) + "'");
  SessionManifest m;
  m.directory = directory;
  std::map<std::string, std::string> keys;
  bool in_frames = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (!in_frames && eq != std::string::npos) {
      keys[line.substr(0, eq)] = line.substr(eq + 1);
    } else {
      in_frames = true;
      m.frame_paths.push_back(line);
    }
  }
  for (const char* k : {"subject_id", "session_id", "appearance_tag", "frame_count"})
    require(keys.count(k) == 1, ErrorKind::decode_failed, std::string("manifest missing key ") + k);
  m.subject_id = keys["subject_id"];
  m.session_id = keys["session_id"];
  m.appearance_tag = keys["appearance_tag"];
  try {
    m.frame_count = std::stoi(keys["frame_count"]);
  } catch (const std::exception&) {
    fail(ErrorKind::decode_failed, "manifest frame_count is not an integer");
  }
  m.validate(false);
  return m;
}

SessionManifest SessionManifest::read(const fs::path& manifest_file) {
  std::ifstream in(manifest_file);
  require(static_cast<bool>(in), ErrorKind::file_missing, "cannot read " + manifest_file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), manifest_file.parent_path());
}

void SessionManifest::write() const {
  fs::create_directories(directory);
  std::ofstream out(directory / "manifest.txt", std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::write_failed, "cannot write manifest in " + directory.string());
  out << serialize();
}

namespace {

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.png", i);
  return buf;
}

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

ImageTensor as_rgb(const ImageTensor& img) {
  if (img.channels() == 3) return img;
  ImageTensor out(3, img.height(), img.width(), img.range());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(0, y, x);
  return out;
}

}  // namespace

SessionManifest ingest_session(const fs::path& frames_dir, const fs::path& data_root,
                               const std::string& subject_id, const std::string& session_id,
                               const std::string& appearance_tag, int target_size,
                               const IngestOptions& options) {
  require(fs::is_directory(frames_dir), ErrorKind::file_missing, "no such directory: " + frames_dir.string());
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(frames_dir))
    if (entry.is_regular_file() && is_png(entry.path())) inputs.push_back(entry.path());
  require(!inputs.empty(), ErrorKind::empty_input, "no frames in " + frames_dir.string());
  std::sort(inputs.begin(), inputs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  SessionManifest m;
  m.subject_id = subject_id;
  m.session_id = session_id;
  m.appearance_tag = appearance_tag;
  m.directory = data_root / subject_id / session_id;
  m.validate(false);

  // Frames land in a staging directory first so a failed ingest leaves any
  // previous session untouched.
  const fs::path staging = m.directory / ".ingest";
  fs::remove_all(staging);
  fs::create_directories(staging);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ImageTensor frame;
    try {
      frame = load_image(inputs[i], ValueRange::unit);
    } catch (const Error& e) {
      fs::remove_all(staging);
      throw Error(e.kind(), "ingestion aborted at " + inputs[i].filename().string() + ": " + e.what());
    }
    frame = as_rgb(resize_crop(frame, target_size, options.face_box, options.allow_upscale));
    save_image(frame, staging / frame_name(i));
    m.frame_paths.push_back("frames/" + frame_name(i));
  }
  m.frame_count = static_cast<int>(m.frame_paths.size());
  fs::remove_all(m.directory / "frames");
  fs::remove_all(m.directory / "masks");
  fs::rename(staging, m.directory / "frames");
  m.write();
  return m;
}

MaskingReport synthesize_session_masks(SessionManifest& manifest, LandmarkDetector& detector,
                                       const MaskSpec& spec) {
  spec.validate();
  const fs::path mask_dir = manifest.directory / "masks";
  fs::remove_all(mask_dir);
  fs::create_directories(mask_dir);
  MaskingReport report;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < manifest.frame_paths.size(); ++i) {
    const ImageTensor frame = load_image(manifest.frame_path(i), ValueRange::unit);
    std::optional<BinaryMask> mask;
    if (auto landmarks = detector.detect(manifest.frame_id(i), frame)) {
      try {
        mask = synthesize_hmd_mask(*landmarks, spec, frame.width(), frame.height());
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::degenerate_region) throw;
      }
    }
    if (!mask) {
      ++report.skipped;
      fs::remove(manifest.frame_path(i));
      continue;
    }
    save_mask(*mask, manifest.mask_path(i));
    kept.push_back(manifest.frame_paths[i]);
    ++report.masked;
  }
  manifest.frame_paths = std::move(kept);
  manifest.frame_count = static_cast<int>(manifest.frame_paths.size());
  manifest.write();
  return report;
}

std::vector<SessionManifest> discover_sessions(const fs::path& data_root) {
  require(fs::is_directory(data_root), ErrorKind::file_missing, "no such data root: " + data_root.string());
  std::vector<fs::path> files;
  for (const auto& subject : fs::directory_iterator(data_root)) {
    if (!subject.is_directory()) continue;
    for (const auto& session : fs::directory_iterator(subject.path())) {
      const fs::path f = session.path() / "manifest.txt";
      if (session.is_directory() && fs::exists(f)) files.push_back(f);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<SessionManifest> out;
  for (const auto& f : files) out.push_back(SessionManifest::read(f));
  return out;
}

// --- Splits -----------------------------------------------------------------

void DatasetSplit::validate() const {
  std::set<std::string> train_keys;
  std::map<std::string, std::set<std::string>> train_tags;
  for (const auto& s : train_sessions) {
    train_keys.insert(s.key());
    train_tags[s.subject_id].insert(s.appearance_tag);
  }
  for (const auto& s : test_sessions) {
    require(!train_keys.count(s.key()), ErrorKind::split_policy, "session " + s.key() + " is in both train and test");
    auto it = train_tags.find(s.subject_id);
    require(it != train_tags.end(), ErrorKind::split_policy,
            "test subject " + s.subject_id + " has no training sessions");
    require(!it->second.count(s.appearance_tag), ErrorKind::split_policy,
            "test session " + s.key() + " reuses a training appearance");
  }
}

std::string DatasetSplit::descriptor() const {
  std::string out = "train=";
  for (std::size_t i = 0; i < train_sessions.size(); ++i) out += (i ? "," : "") + train_sessions[i].key();
  out += ";test=";
  for (std::size_t i = 0; i < test_sessions.size(); ++i) out += (i ? "," : "") + test_sessions[i].key();
  return out;
}

DatasetSplit split_sessions(const std::vector<SessionManifest>& manifests, const AppearanceHoldout& policy) {
  require(!manifests.empty(), ErrorKind::empty_input, "no sessions to split");
  std::map<std::string, std::set<std::string>> tags;
  std::set<std::string> keys;
  for (const auto& m : manifests) {
    require(keys.insert(m.key()).second, ErrorKind::split_policy, "duplicate session " + m.key());
    tags[m.subject_id].insert(m.appearance_tag);
  }
  std::map<std::string, std::set<std::string>> held_out;
  for (const auto& [subject, subject_tags] : tags) {
    require(subject_tags.size() >= 2, ErrorKind::split_policy,
            "subject " + subject + " has a single appearance; an unseen-appearance test set needs two");
    std::set<std::string> hold;
    if (policy.tags.empty()) {
      hold.insert(*subject_tags.rbegin());
    } else {
      for (const auto& t : subject_tags)
        if (policy.tags.count(t)) hold.insert(t);
    }
    require(hold.size() < subject_tags.size(), ErrorKind::split_policy,
            "holding out every appearance of subject " + subject + " leaves nothing to train on");
    held_out[subject] = std::move(hold);
  }
  DatasetSplit split;
  for (const auto& m : manifests) {
    if (held_out[m.subject_id].count(m.appearance_tag))
      split.test_sessions.push_back(m);
    else
      split.train_sessions.push_back(m);
  }
  split.validate();
  return split;
}

// --- Sources and batching ---------------------------------------------------

MemorySource::MemorySource(std::vector<Sample> samples) : samples_(std::move(samples)) {}

MemorySource MemorySource::from_images(const std::vector<ImageTensor>& images) {
  std::vector<Sample> samples;
  samples.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageTensor& img = images[i];
    BinaryMask empty(img.height(), img.width());
    samples.push_back({img, empty, img, "corpus/" + std::to_string(i), "corpus"});
  }
  return MemorySource(std::move(samples));
}

SplitSource::SplitSource(const DatasetSplit& split, SplitRole role, float fill) : fill_(fill) {
  const auto& sessions = role == SplitRole::train ? split.train_sessions : split.test_sessions;
  for (const auto& s : sessions)
    for (std::size_t i = 0; i < s.frame_paths.size(); ++i)
      frames_.push_back({s.frame_path(i), s.mask_path(i), s.frame_id(i), s.key()});
}

Sample SplitSource::load(std::size_t index) const {
  const FrameRef& f = frames_.at(index);
  ImageTensor gt = load_image(f.frame, ValueRange::signed_unit);
  BinaryMask mask = load_mask(f.mask);
  return make_sample(gt, mask, fill_, f.frame_id, f.session_id);
}

MemorySource SplitSource::materialize() const {
  std::vector<Sample> samples;
  samples.reserve(frames_.size());
  for (std::size_t i = 0; i < frames_.size(); ++i) samples.push_back(load(i));
  return MemorySource(std::move(samples));
}

BatchIterator::BatchIterator(std::shared_ptr<const FrameSource> source, std::size_t batch_size,
                             std::uint64_t seed, std::uint64_t epoch, bool shuffle)
    : source_(std::move(source)), batch_size_(batch_size) {
  require(batch_size_ >= 1, ErrorKind::config, "batch size must be >= 1");
  require(source_ && source_->size() > 0, ErrorKind::empty_input, "no frames to iterate");
  if (shuffle) {
    order_ = permutation(source_->size(), mix_seed(seed, epoch));
  } else {
    order_.resize(source_->size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  }
}

std::optional<std::vector<Sample>> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<Sample> batch;
  batch.reserve(end - cursor_);
  for (; cursor_ < end; ++cursor_) batch.push_back(source_->load(order_[cursor_]));
  return batch;
}

void BatchIterator::skip(std::size_t batches) {
  cursor_ = std::min(order_.size(), cursor_ + batches * batch_size_);
}

std::size_t BatchIterator::batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

BatchIterator batch_iter(std::shared_ptr<const FrameSource> source, SplitRole role, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch) {
  return BatchIterator(std::move(source), batch_size, seed, epoch, role == SplitRole::train);
}

BatchIterator batch_iter(const DatasetSplit& split, SplitRole role, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch, float fill) {
  return batch_iter(std::make_shared<SplitSource>(split, role, fill), role, batch_size, seed, epoch);
}

}  // namespace deoccl
