#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deoccl/dataset.hpp"
#include "deoccl/imaging.hpp"
#include "deoccl/network.hpp"
#include "json.hpp"

namespace deoccl {

// Single-scale SSIM constants: Gaussian window, stabilisers, dynamic range.
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Normalised 1-D Gaussian taps.
std::vector<double> gaussian_window(int size, double sigma);

// Mean SSIM of one plane pair over the valid window positions. When given,
// `map` receives the (h - window + 1) x (w - window + 1) SSIM map and `grad_a`
// the gradient of the mean with respect to each pixel of `a`.
double ssim_plane(std::span<const double> a, std::span<const double> b, int height, int width,
                  const SsimParams& params = {}, std::vector<double>* map = nullptr,
                  std::vector<double>* grad_a = nullptr);

struct SsimResult {
  double mean = 0.0;
  int map_height = 0;
  int map_width = 0;
  std::vector<double> map;  // averaged over channels
};

// Both images are converted to unit range; channels are scored separately
// and averaged.
SsimResult ssim(const ImageTensor& a, const ImageTensor& b, const SsimParams& params = {});

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) on unit-range values, capped at kPsnrCap.
double psnr(const ImageTensor& a, const ImageTensor& b);
// Same, with the MSE taken over mask = 1 pixels only.
double psnr_masked(const ImageTensor& a, const ImageTensor& b, const BinaryMask& mask);

// Learned perceptual distance (e.g. LPIPS) supplied from outside.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string name() const = 0;
  virtual double distance(const ImageTensor& a, const ImageTensor& b) = 0;
};

// nullopt without a plugin; plugin exceptions become plugin_failure errors.
std::optional<double> perceptual_distance(const ImageTensor& a, const ImageTensor& b,
                                          PerceptualMetric* plugin);

struct FrameScore {
  std::string frame_id;
  double ssim = 0.0;
  double psnr = 0.0;
  std::optional<double> perceptual;
  std::optional<double> masked_psnr;
};

struct Aggregate {
  double ssim = 0.0;
  double psnr = 0.0;
  std::optional<double> perceptual;
  std::optional<double> masked_psnr;
};

struct MetricReport {
  std::string method_label;
  std::string split_descriptor;
  std::string config_hash;
  std::optional<std::string> perceptual_plugin;
  SsimParams ssim_params;
  std::vector<FrameScore> per_frame;
  Aggregate aggregate;

  // Arithmetic means of per_frame, summed in frame order.
  Aggregate recompute() const;
  void validate() const;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

using Reconstructor = std::function<ImageTensor(const Sample&)>;

// Test hooks: return the ground truth, or the occluded input unchanged.
Reconstructor oracle_reconstructor();
Reconstructor identity_reconstructor();
// Attention-mode inference with the given parameters.
Reconstructor model_reconstructor(const Model& model, const ParameterStore<float>& params);

struct EvaluateOptions {
  std::string method_label = "model";
  std::string split_descriptor;
  std::string config_hash;
  PerceptualMetric* perceptual = nullptr;
  bool masked_only = false;  // also report masked-region PSNR
};

// Scores every frame of `source` full-frame. Frames are scored concurrently
// and reduced in source order.
MetricReport evaluate(const FrameSource& source, const Reconstructor& reconstruct,
                      const EvaluateOptions& options = {});
MetricReport evaluate(const Model& model, const ParameterStore<float>& params, const DatasetSplit& split,
                      EvaluateOptions options = {}, float fill = -1.0f);

struct ComparisonRow {
  std::string method;
  double ssim = 0.0;
  double psnr = 0.0;
  std::optional<double> perceptual;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  bool has_perceptual = false;

  // Columns: method, SSIM, PSNR[, LPIPS].
  std::string to_csv() const;
  std::string to_text() const;
};

// Reports must share a split descriptor. The perceptual column appears only
// when every report carries it.
ComparisonTable compare_report(const std::vector<MetricReport>& reports);

}  // namespace deoccl
