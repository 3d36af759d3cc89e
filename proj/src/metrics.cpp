#include "deoccl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>

namespace deoccl {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const double centre = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - centre;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

namespace {

// Valid-region separable correlation of an h x w plane with g (both axes).
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += g[t] * src[static_cast<std::size_t>(y) * w + x + t];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += g[t] * tmp[static_cast<std::size_t>(y + t) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

// Adjoint of filter_valid: scatters an oh x ow plane back onto h x w.
std::vector<double> filter_valid_adjoint(const std::vector<double>& d, int h, int w,
                                         const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int t = 0; t < k; ++t)
      for (int x = 0; x < ow; ++x)
        tmp[static_cast<std::size_t>(y + t) * ow + x] += g[t] * d[static_cast<std::size_t>(y) * ow + x];
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x)
      for (int t = 0; t < k; ++t)
        out[static_cast<std::size_t>(y) * w + x + t] += g[t] * tmp[static_cast<std::size_t>(y) * ow + x];
  return out;
}

std::vector<double> plane_of(const ImageTensor& img, int c) {
  const std::size_t n = static_cast<std::size_t>(img.height()) * img.width();
  auto v = img.values().subspan(c * n, n);
  return {v.begin(), v.end()};
}

void require_same_extent(const ImageTensor& a, const ImageTensor& b) {
  require(a.channels() == b.channels() && a.height() == b.height() && a.width() == b.width(),
          ErrorKind::shape_mismatch, "images differ in extent");
}

}  // namespace

double ssim_plane(std::span<const double> a, std::span<const double> b, int height, int width,
                  const SsimParams& params, std::vector<double>* map, std::vector<double>* grad_a) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  require(a.size() == n && b.size() == n, ErrorKind::shape_mismatch, "ssim plane size mismatch");
  require(height >= params.window && width >= params.window, ErrorKind::precondition,
          "image smaller than the SSIM window");
  const auto g = gaussian_window(params.window, params.sigma);
  const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
  const double c2 = std::pow(params.k2 * params.dynamic_range, 2);

  std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end());
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu_a = filter_valid(va, height, width, g);
  const auto mu_b = filter_valid(vb, height, width, g);
  const auto e_aa = filter_valid(aa, height, width, g);
  const auto e_bb = filter_valid(bb, height, width, g);
  const auto e_ab = filter_valid(ab, height, width, g);

  const std::size_t m = mu_a.size();
  if (map) map->resize(m);
  std::vector<double> d_mu, d_aa, d_ab;
  if (grad_a) {
    d_mu.resize(m);
    d_aa.resize(m);
    d_ab.resize(m);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma;
    const double var_b = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    const double a1 = 2.0 * ma * mb + c1;
    const double a2 = 2.0 * cov + c2;
    const double b1 = ma * ma + mb * mb + c1;
    const double b2 = var_a + var_b + c2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    if (map) (*map)[i] = s;
    if (grad_a) {
      const double scale = 1.0 / static_cast<double>(m);
      d_mu[i] = scale * s * (2.0 * mb / a1 - 2.0 * mb / a2 - 2.0 * ma / b1 + 2.0 * ma / b2);
      d_aa[i] = scale * s * (-1.0 / b2);
      d_ab[i] = scale * s * (2.0 / a2);
    }
  }
  if (grad_a) {
    const auto g_mu = filter_valid_adjoint(d_mu, height, width, g);
    const auto g_aa = filter_valid_adjoint(d_aa, height, width, g);
    const auto g_ab = filter_valid_adjoint(d_ab, height, width, g);
    grad_a->resize(n);
    for (std::size_t i = 0; i < n; ++i) (*grad_a)[i] = g_mu[i] + 2.0 * va[i] * g_aa[i] + vb[i] * g_ab[i];
  }
  return total / static_cast<double>(m);
}

SsimResult ssim(const ImageTensor& a, const ImageTensor& b, const SsimParams& params) {
  require_same_extent(a, b);
  const ImageTensor ua = to_range(a, ValueRange::unit);
  const ImageTensor ub = to_range(b, ValueRange::unit);
  SsimResult result;
  result.map_height = a.height() - params.window + 1;
  result.map_width = a.width() - params.window + 1;
  double total = 0.0;
  std::vector<double> map;
  for (int c = 0; c < a.channels(); ++c) {
    const auto pa = plane_of(ua, c);
    const auto pb = plane_of(ub, c);
    total += ssim_plane(pa, pb, a.height(), a.width(), params, &map);
    if (result.map.empty()) result.map.assign(map.size(), 0.0);
    for (std::size_t i = 0; i < map.size(); ++i) result.map[i] += map[i] / a.channels();
  }
  result.mean = total / a.channels();
  return result;
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_extent(a, b);
  const ImageTensor ua = to_range(a, ValueRange::unit);
  const ImageTensor ub = to_range(b, ValueRange::unit);
  double sum = 0.0;
  for (std::size_t i = 0; i < ua.size(); ++i) {
    const double d = static_cast<double>(ua.values()[i]) - ub.values()[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(ua.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr_masked(const ImageTensor& a, const ImageTensor& b, const BinaryMask& mask) {
  require_same_extent(a, b);
  require(mask.height() == a.height() && mask.width() == a.width(), ErrorKind::shape_mismatch,
          "mask extent differs from image");
  const ImageTensor ua = to_range(a, ValueRange::unit);
  const ImageTensor ub = to_range(b, ValueRange::unit);
  double sum = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) {
        if (mask.at(y, x) == 0.0f) continue;
        const double d = static_cast<double>(ua.at(c, y, x)) - ub.at(c, y, x);
        sum += d * d;
        ++count;
      }
  require(count > 0, ErrorKind::precondition, "masked PSNR needs a non-empty mask");
  const double mse = sum / static_cast<double>(count);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::optional<double> perceptual_distance(const ImageTensor& a, const ImageTensor& b,
                                          PerceptualMetric* plugin) {
  if (!plugin) return std::nullopt;
  try {
    return plugin->distance(a, b);
  } catch (const std::exception& e) {
    fail(ErrorKind::plugin_failure, "perceptual plugin '" + plugin->name() + "' failed: " + e.what());
  }
}

// --- Reports ----------------------------------------------------------------

Aggregate MetricReport::recompute() const {
  require(!per_frame.empty(), ErrorKind::empty_input, "report has no frames");
  Aggregate agg;
  double s = 0.0, p = 0.0, lp = 0.0, mp = 0.0;
  bool all_lp = true, all_mp = true;
  for (const auto& f : per_frame) {
    s += f.ssim;
    p += f.psnr;
    if (f.perceptual) lp += *f.perceptual; else all_lp = false;
    if (f.masked_psnr) mp += *f.masked_psnr; else all_mp = false;
  }
  const double n = static_cast<double>(per_frame.size());
  agg.ssim = s / n;
  agg.psnr = p / n;
  if (all_lp) agg.perceptual = lp / n;
  if (all_mp) agg.masked_psnr = mp / n;
  return agg;
}

void MetricReport::validate() const {
  const Aggregate agg = recompute();
  require(agg.ssim == aggregate.ssim && agg.psnr == aggregate.psnr &&
              agg.perceptual == aggregate.perceptual && agg.masked_psnr == aggregate.masked_psnr,
          ErrorKind::precondition, "report aggregate does not match its per-frame rows");
}

namespace {

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : per_frame) {
    nlohmann::json row{{"frame_id", f.frame_id}, {"ssim", f.ssim}, {"psnr_db", f.psnr}};
    if (f.perceptual) row["perceptual"] = *f.perceptual;
    if (f.masked_psnr) row["masked_psnr_db"] = *f.masked_psnr;
    frames.push_back(std::move(row));
  }
  nlohmann::json agg{{"ssim", aggregate.ssim}, {"psnr_db", aggregate.psnr}};
  if (aggregate.perceptual) agg["perceptual"] = *aggregate.perceptual;
  if (aggregate.masked_psnr) agg["masked_psnr_db"] = *aggregate.masked_psnr;
  return {
      {"metadata",
       {{"method_label", method_label},
        {"split", split_descriptor},
        {"config_hash", config_hash},
        {"perceptual_plugin", perceptual_plugin ? nlohmann::json(*perceptual_plugin) : nlohmann::json(nullptr)},
        {"ssim", {{"window", ssim_params.window}, {"sigma", ssim_params.sigma}, {"k1", ssim_params.k1},
                  {"k2", ssim_params.k2}, {"dynamic_range", ssim_params.dynamic_range}}},
        {"psnr_cap_db", kPsnrCap}}},
      {"aggregate", agg},
      {"per_frame", frames},
  };
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  try {
    MetricReport r;
    const auto& meta = j.at("metadata");
    r.method_label = meta.at("method_label").get<std::string>();
    r.split_descriptor = meta.at("split").get<std::string>();
    r.config_hash = meta.at("config_hash").get<std::string>();
    if (!meta.at("perceptual_plugin").is_null()) r.perceptual_plugin = meta.at("perceptual_plugin").get<std::string>();
    const auto& s = meta.at("ssim");
    r.ssim_params = {s.at("window").get<int>(), s.at("sigma").get<double>(), s.at("k1").get<double>(),
                     s.at("k2").get<double>(), s.at("dynamic_range").get<double>()};
    for (const auto& row : j.at("per_frame"))
      r.per_frame.push_back({row.at("frame_id").get<std::string>(), row.at("ssim").get<double>(),
                             row.at("psnr_db").get<double>(), optional_from(row, "perceptual"),
                             optional_from(row, "masked_psnr_db")});
    const auto& agg = j.at("aggregate");
    r.aggregate = {agg.at("ssim").get<double>(), agg.at("psnr_db").get<double>(), optional_from(agg, "perceptual"),
                   optional_from(agg, "masked_psnr_db")};
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::decode_failed, std::string("malformed report: ") + e.what());
  }
}

// --- Evaluation -------------------------------------------------------------

Reconstructor oracle_reconstructor() {
  return [](const Sample& s) { return s.ground_truth; };
}

Reconstructor identity_reconstructor() {
  return [](const Sample& s) { return s.occluded; };
}

Reconstructor model_reconstructor(const Model& model, const ParameterStore<float>& params) {
  return [&model, &params](const Sample& s) {
    const ImageTensor input = to_range(s.occluded, ValueRange::signed_unit);
    input.validate_for_network();
    const ImageTensor* one[] = {&input};
    const Tensor<float> x = stack_images<float>(one);
    const auto out = model.generator().forward(params, x, ForwardMode::attention, Phase::inference);
    return unstack_image(out.x_rec, 0, ValueRange::signed_unit);
  };
}

MetricReport evaluate(const FrameSource& source, const Reconstructor& reconstruct,
                      const EvaluateOptions& options) {
  const std::size_t n = source.size();
  require(n > 0, ErrorKind::empty_input, "empty test split");
  std::vector<FrameScore> scores(n);
  std::exception_ptr failure;
  // Plugins are not assumed to be thread-safe.
  const bool parallel = options.perceptual == nullptr;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      const Sample s = source.load(static_cast<std::size_t>(i));
      const ImageTensor rec = reconstruct(s);
      FrameScore f;
      f.frame_id = s.frame_id;
      f.ssim = ssim(rec, s.ground_truth).mean;
      f.psnr = psnr(rec, s.ground_truth);
      f.perceptual = perceptual_distance(rec, s.ground_truth, options.perceptual);
      if (options.masked_only) f.masked_psnr = psnr_masked(rec, s.ground_truth, s.mask);
      scores[i] = std::move(f);
    } catch (...) {
#pragma omp critical(deoccl_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  MetricReport report;
  report.method_label = options.method_label;
  report.split_descriptor = options.split_descriptor;
  report.config_hash = options.config_hash;
  if (options.perceptual) report.perceptual_plugin = options.perceptual->name();
  report.per_frame = std::move(scores);
  report.aggregate = report.recompute();
  return report;
}

MetricReport evaluate(const Model& model, const ParameterStore<float>& params, const DatasetSplit& split,
                      EvaluateOptions options, float fill) {
  model.check(params);
  const SplitSource source(split, SplitRole::test, fill);
  if (options.split_descriptor.empty()) options.split_descriptor = split.descriptor();
  return evaluate(source, model_reconstructor(model, params), options);
}

// --- Comparison tables ------------------------------------------------------

ComparisonTable compare_report(const std::vector<MetricReport>& reports) {
  require(!reports.empty(), ErrorKind::empty_input, "no reports to compare");
  ComparisonTable table;
  table.has_perceptual = true;
  for (const auto& r : reports) {
    require(r.split_descriptor == reports.front().split_descriptor, ErrorKind::precondition,
            "reports '" + reports.front().method_label + "' and '" + r.method_label +
                "' were computed on different splits");
    table.has_perceptual = table.has_perceptual && r.aggregate.perceptual.has_value();
  }
  for (const auto& r : reports) {
    ComparisonRow row{r.method_label, r.aggregate.ssim, r.aggregate.psnr, std::nullopt};
    if (table.has_perceptual) row.perceptual = r.aggregate.perceptual;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream out;
  out << "method,SSIM,PSNR" << (has_perceptual ? ",LPIPS" : "") << '\n';
  char buf[64];
  for (const auto& r : rows) {
    out << r.method;
    std::snprintf(buf, sizeof buf, ",%.6f,%.4f", r.ssim, r.psnr);
    out << buf;
    if (has_perceptual) {
      std::snprintf(buf, sizeof buf, ",%.6f", r.perceptual.value_or(0.0));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string ComparisonTable::to_text() const {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %9s", static_cast<int>(width), "method", "SSIM", "PSNR");
  out << buf << (has_perceptual ? "  LPIPS" : "") << '\n';
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %9.3f", static_cast<int>(width), r.method.c_str(), r.ssim, r.psnr);
    out << buf;
    if (has_perceptual) {
      std::snprintf(buf, sizeof buf, "  %.4f", r.perceptual.value_or(0.0));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace deoccl
