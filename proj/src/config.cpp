#include "deoccl/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace deoccl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_number(const std::string& key, const std::string& value) {
  V out{};
  const char* first = value.data();
  const char* last = first + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  require(ec == std::errc() && ptr == last, ErrorKind::config, "bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  fail(ErrorKind::config, "bad value for " + key + ": '" + value + "' (expected true or false)");
}

template <typename V>
std::string format(V v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format(bool v) { return v ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename V, typename Access>
Field number_field(Access access) {
  return {[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_number<V>(k, v); },
          [access](const RunConfig& c) { return format(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Field bool_field(Access access) {
  return {[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_bool(k, v); },
          [access](const RunConfig& c) { return format(static_cast<bool>(access(const_cast<RunConfig&>(c)))); }};
}

template <typename Access>
Field string_field(Access access) {
  return {[access](RunConfig& c, const std::string&, const std::string& v) { access(c) = v; },
          [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"image_size", number_field<int>([](RunConfig& c) -> int& { return c.network.image_size; })},
      {"base_filters", number_field<int>([](RunConfig& c) -> int& { return c.network.base_filters; })},
      {"bottleneck_dim", number_field<int>([](RunConfig& c) -> int& { return c.network.bottleneck_dim; })},
      {"encoder_depth", number_field<int>([](RunConfig& c) -> int& { return c.network.encoder_depth; })},
      {"attention_site_size", number_field<int>([](RunConfig& c) -> int& { return c.network.attention_site_size; })},
      {"batch_norm", bool_field([](RunConfig& c) -> bool& { return c.network.batch_norm; })},
      {"mask_input_channel", bool_field([](RunConfig& c) -> bool& { return c.network.mask_input_channel; })},
      {"batch_size", number_field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.train.batch_size; })},
      {"learning_rate", number_field<double>([](RunConfig& c) -> double& { return c.train.adam.learning_rate; })},
      {"adam_beta1", number_field<double>([](RunConfig& c) -> double& { return c.train.adam.beta1; })},
      {"adam_beta2", number_field<double>([](RunConfig& c) -> double& { return c.train.adam.beta2; })},
      {"adam_eps", number_field<double>([](RunConfig& c) -> double& { return c.train.adam.eps; })},
      {"lambda_rec", number_field<double>([](RunConfig& c) -> double& { return c.train.weights.rec; })},
      {"lambda_adv", number_field<double>([](RunConfig& c) -> double& { return c.train.weights.adv; })},
      {"lambda_ssim", number_field<double>([](RunConfig& c) -> double& { return c.train.weights.ssim; })},
      {"lambda_mask", number_field<double>([](RunConfig& c) -> double& { return c.train.weights.mask; })},
      {"checkpoint_every", number_field<int>([](RunConfig& c) -> int& { return c.train.checkpoint_every; })},
      {"passes_per_epoch", number_field<int>([](RunConfig& c) -> int& { return c.train.passes_per_epoch; })},
      {"occlusion_fill", number_field<float>([](RunConfig& c) -> float& { return c.train.occlusion_fill; })},
      {"seed", number_field<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.seed; })},
      {"epoch_scale", number_field<double>([](RunConfig& c) -> double& { return c.epoch_scale; })},
      {"mask_horizontal_margin",
       number_field<double>([](RunConfig& c) -> double& { return c.mask.horizontal_margin; })},
      {"mask_vertical_margin", number_field<double>([](RunConfig& c) -> double& { return c.mask.vertical_margin; })},
      {"mask_shape",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          const auto shape = parse_mask_shape(v);
          require(shape.has_value(), ErrorKind::config,
                  "bad value for " + k + ": '" + v + "' (expected rectangle or rounded-rectangle)");
          c.mask.shape = *shape;
        },
        [](const RunConfig& c) { return to_string(c.mask.shape); }}},
      {"data_root", string_field([](RunConfig& c) -> std::string& { return c.data_root; })},
      {"out_root", string_field([](RunConfig& c) -> std::string& { return c.out_root; })},
      {"generic_corpus", string_field([](RunConfig& c) -> std::string& { return c.generic_corpus; })},
      {"landmark_provider", string_field([](RunConfig& c) -> std::string& { return c.landmark_provider; })},
      {"holdout_tags",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.holdout_tags.clear();
          std::stringstream in(v);
          std::string tag;
          while (std::getline(in, tag, ','))
            if (!trim(tag).empty()) c.holdout_tags.insert(trim(tag));
        },
        [](const RunConfig& c) {
          std::string out;
          for (const auto& t : c.holdout_tags) out += (out.empty() ? "" : ",") + t;
          return out;
        }}},
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = fields();
  auto it = table.find(key);
  require(it != table.end(), ErrorKind::config, "unknown config key '" + key + "'");
  it->second.set(*this, key, trim(value));
  explicit_.insert(key);
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::config, "cannot read config file " + path.string());
  std::string line;
  std::getline(in, line);
  require(trim(line) == kHeader, ErrorKind::config,
          path.string() + ": first line must be '" + std::string(kHeader) + "'");
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::config,
            path.string() + ":" + std::to_string(number) + ": expected key=value");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      fail(ErrorKind::config, path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::finalize() {
  const bool geometry_given = explicit_.count("encoder_depth") || explicit_.count("attention_site_size");
  if (!geometry_given) {
    const bool mask_channel = network.mask_input_channel;
    network = NetworkConfig::scaled(network.image_size, network.base_filters, network.bottleneck_dim,
                                    network.batch_norm);
    network.mask_input_channel = mask_channel;
  }
  network.validate();
  train.schedule = default_schedule(epoch_scale);
  train.seed = seed;
  train.validate();
  mask.validate();
}

std::string RunConfig::to_text() const {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& [key, field] : fields()) out += key + "=" + field.get(*this) + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  const std::string text = to_text();
  return fnv1a(text.data(), text.size());
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [key, _] : fields()) out.push_back(key);
  return out;
}

std::string default_data_root() {
  const char* env = std::getenv("DEOCCL_DATA_ROOT");
  return env && *env ? std::string(env) : std::string("data");
}

}  // namespace deoccl
