#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "deoccl/training.hpp"

namespace deoccl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename V>
  void put(V v) {
    static_assert(std::is_trivially_copyable_v<V>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(V));
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void floats(const Tensor<float>& t) {
    const auto* p = reinterpret_cast<const char*>(t.data());
    buf_.insert(buf_.end(), p, p + t.size() * sizeof(float));
  }
  void optional(const std::optional<double>& v) {
    put<std::uint8_t>(v ? 1 : 0);
    put<double>(v.value_or(0.0));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, data_ + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  void floats(Tensor<float>& t) {
    need(t.size() * sizeof(float));
    std::memcpy(t.data(), data_ + pos_, t.size() * sizeof(float));
    pos_ += t.size() * sizeof(float);
  }
  std::optional<double> optional() {
    const bool present = get<std::uint8_t>() != 0;
    const double v = get<double>();
    return present ? std::optional<double>(v) : std::nullopt;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    require(size_ - pos_ >= n, ErrorKind::checkpoint_corrupt, "checkpoint is truncated");
  }
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_shape(Writer& w, const Shape4& s) {
  w.put<std::int32_t>(s.n);
  w.put<std::int32_t>(s.c);
  w.put<std::int32_t>(s.h);
  w.put<std::int32_t>(s.w);
}

Shape4 read_shape(Reader& r) {
  Shape4 s;
  s.n = r.get<std::int32_t>();
  s.c = r.get<std::int32_t>();
  s.h = r.get<std::int32_t>();
  s.w = r.get<std::int32_t>();
  require(s.n >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0 && s.size() < (std::size_t{1} << 34),
          ErrorKind::checkpoint_corrupt, "checkpoint holds an invalid tensor shape");
  return s;
}

void write_network(Writer& w, const NetworkConfig& n) {
  w.put<std::int32_t>(n.image_size);
  w.put<std::int32_t>(n.base_filters);
  w.put<std::int32_t>(n.bottleneck_dim);
  w.put<std::int32_t>(n.encoder_depth);
  w.put<std::int32_t>(n.attention_site_size);
  w.put<std::uint8_t>(n.batch_norm);
  w.put<std::uint8_t>(n.mask_input_channel);
}

NetworkConfig read_network(Reader& r) {
  NetworkConfig n;
  n.image_size = r.get<std::int32_t>();
  n.base_filters = r.get<std::int32_t>();
  n.bottleneck_dim = r.get<std::int32_t>();
  n.encoder_depth = r.get<std::int32_t>();
  n.attention_site_size = r.get<std::int32_t>();
  n.batch_norm = r.get<std::uint8_t>() != 0;
  n.mask_input_channel = r.get<std::uint8_t>() != 0;
  return n;
}

void write_train(Writer& w, const TrainConfig& c) {
  w.put<std::uint64_t>(c.batch_size);
  w.put<double>(c.adam.learning_rate);
  w.put<double>(c.adam.beta1);
  w.put<double>(c.adam.beta2);
  w.put<double>(c.adam.eps);
  w.put<double>(c.weights.rec);
  w.put<double>(c.weights.adv);
  w.put<double>(c.weights.ssim);
  w.put<double>(c.weights.mask);
  w.put<std::uint64_t>(c.seed);
  w.put<std::int32_t>(c.checkpoint_every);
  w.put<std::int32_t>(c.passes_per_epoch);
  w.put<float>(c.occlusion_fill);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.schedule.size()));
  for (const auto& s : c.schedule) {
    w.str(s.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.step));
    w.put<std::uint8_t>(s.active_losses.bits());
    w.put<std::int32_t>(s.epochs);
    w.put<std::uint8_t>(s.trainable_groups.bits());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.forward_mode));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.data_source));
  }
}

TrainConfig read_train(Reader& r) {
  TrainConfig c;
  c.batch_size = r.get<std::uint64_t>();
  c.adam.learning_rate = r.get<double>();
  c.adam.beta1 = r.get<double>();
  c.adam.beta2 = r.get<double>();
  c.adam.eps = r.get<double>();
  c.weights.rec = r.get<double>();
  c.weights.adv = r.get<double>();
  c.weights.ssim = r.get<double>();
  c.weights.mask = r.get<double>();
  c.seed = r.get<std::uint64_t>();
  c.checkpoint_every = r.get<std::int32_t>();
  c.passes_per_epoch = r.get<std::int32_t>();
  c.occlusion_fill = r.get<float>();
  const auto stages = r.get<std::uint32_t>();
  require(stages < 1024, ErrorKind::checkpoint_corrupt, "checkpoint schedule is implausibly long");
  c.schedule.clear();
  for (std::uint32_t i = 0; i < stages; ++i) {
    StageSpec s;
    s.name = r.str();
    s.step = r.get<std::uint8_t>();
    s.active_losses = LossSet::from_bits(r.get<std::uint8_t>());
    s.epochs = r.get<std::int32_t>();
    s.trainable_groups = GroupSet::from_bits(r.get<std::uint8_t>());
    const auto mode = r.get<std::uint8_t>();
    const auto source = r.get<std::uint8_t>();
    require(mode <= 1 && source <= 2, ErrorKind::checkpoint_corrupt, "checkpoint stage has an invalid enum");
    s.forward_mode = static_cast<ForwardMode>(mode);
    s.data_source = static_cast<DataSource>(source);
    c.schedule.push_back(std::move(s));
  }
  return c;
}

}  // namespace

void save_checkpoint(const TrainState& st, const std::filesystem::path& path) {
  Writer w;
  write_network(w, st.network);
  write_train(w, st.config);

  const auto& layout = st.params.layout();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(layout.size()));
  for (ParamId id = 0; id < layout.size(); ++id) {
    const ParamSpec& spec = layout[id];
    w.str(spec.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.group));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.kind));
    write_shape(w, spec.shape);
    w.floats(st.params.value(id));
  }
  w.put<std::uint8_t>(st.params.trainable_groups().bits());

  w.put<std::uint8_t>(static_cast<std::uint8_t>(st.cursor.phase));
  w.put<std::int32_t>(st.cursor.stage);
  w.put<std::int32_t>(st.cursor.epoch);
  w.put<std::uint64_t>(st.cursor.batch);
  w.put<std::uint64_t>(st.cursor.step);

  w.put<std::uint32_t>(static_cast<std::uint32_t>(st.moments.size()));
  for (const auto& slot : st.moments) {
    w.put<std::uint8_t>(slot ? 1 : 0);
    if (!slot) continue;
    w.put<std::uint64_t>(slot->t);
    write_shape(w, slot->m.shape());
    w.floats(slot->m);
    w.floats(slot->v);
  }

  w.put<std::uint64_t>(st.history.size());
  for (const auto& row : st.history) {
    w.put<std::uint64_t>(row.step);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(row.phase));
    w.put<std::int32_t>(row.stage);
    w.put<std::int32_t>(row.epoch);
    w.put<std::uint8_t>(row.loss.active.bits());
    w.optional(row.loss.parts.rec);
    w.optional(row.loss.parts.adv_g);
    w.optional(row.loss.parts.adv_d);
    w.optional(row.loss.parts.ssim);
    w.optional(row.loss.parts.mask);
    w.put<double>(row.loss.total);
  }

  w.put<std::uint32_t>(static_cast<std::uint32_t>(st.boundaries.size()));
  for (const auto& b : st.boundaries) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(b.phase));
    w.put<std::int32_t>(b.stage);
    w.str(b.name);
    w.put<std::uint64_t>(b.step);
    w.put<double>(b.wall_seconds);
  }

  const auto& payload = w.bytes();
  const std::uint64_t checksum = fnv1a(payload.data(), payload.size());
  const std::uint64_t length = payload.size();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::write_failed, "cannot write checkpoint " + path.string());
    out << kCheckpointHeader << '\n';
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&checksum), sizeof checksum);
    require(static_cast<bool>(out), ErrorKind::write_failed, "failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path, const NetworkConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::file_missing, "cannot open checkpoint " + path.string());
  std::string header;
  std::getline(in, header);
  if (header != kCheckpointHeader) {
    require(header.rfind("deoccl-ckpt v", 0) != 0, ErrorKind::checkpoint_version,
            "unsupported checkpoint version '" + header + "' (expected '" + kCheckpointHeader + "')");
    fail(ErrorKind::checkpoint_corrupt, path.string() + " is not a checkpoint");
  }
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  require(static_cast<bool>(in), ErrorKind::checkpoint_corrupt, "checkpoint is truncated");
  const auto start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::uint64_t>(in.tellg() - start);
  require(remaining == length + sizeof(std::uint64_t), ErrorKind::checkpoint_corrupt,
          "checkpoint is truncated or has trailing bytes");
  in.seekg(start);
  std::vector<char> payload(length);
  std::uint64_t checksum = 0;
  in.read(payload.data(), static_cast<std::streamsize>(length));
  in.read(reinterpret_cast<char*>(&checksum), sizeof checksum);
  require(static_cast<bool>(in), ErrorKind::checkpoint_corrupt, "checkpoint is truncated");
  require(fnv1a(payload.data(), payload.size()) == checksum, ErrorKind::checkpoint_corrupt,
          "checkpoint checksum mismatch");

  Reader r(payload.data(), payload.size());
  TrainState st;
  st.network = read_network(r);
  st.config = read_train(r);
  if (expected)
    require(*expected == st.network, ErrorKind::shape_mismatch,
            "checkpoint network (image " + std::to_string(st.network.image_size) + ", m " +
                std::to_string(st.network.base_filters) + ") does not match the configured network (image " +
                std::to_string(expected->image_size) + ", m " + std::to_string(expected->base_filters) + ")");
  try {
    st.network.validate();
  } catch (const Error& e) {
    fail(ErrorKind::checkpoint_corrupt, std::string("checkpoint network config is invalid: ") + e.what());
  }

  const Model model(st.network);
  const ParameterLayout& layout = model.layout();
  const auto count = r.get<std::uint32_t>();
  require(count == layout.size(), ErrorKind::shape_mismatch,
          "checkpoint has " + std::to_string(count) + " parameters, network expects " + std::to_string(layout.size()));
  st.params = ParameterStore<float>(layout);
  for (ParamId id = 0; id < layout.size(); ++id) {
    const ParamSpec& spec = layout[id];
    const std::string name = r.str();
    const auto group = r.get<std::uint8_t>();
    const auto kind = r.get<std::uint8_t>();
    const Shape4 shape = read_shape(r);
    require(name == spec.name && group == static_cast<std::uint8_t>(spec.group) &&
                kind == static_cast<std::uint8_t>(spec.kind) && shape == spec.shape,
            ErrorKind::shape_mismatch,
            "checkpoint parameter '" + name + "' " + to_string(shape) + " does not match '" + spec.name + "' " +
                to_string(spec.shape));
    r.floats(st.params.value(id));
  }
  st.params.set_trainable_groups(GroupSet::from_bits(r.get<std::uint8_t>()));

  const auto phase = r.get<std::uint8_t>();
  require(phase <= 3, ErrorKind::checkpoint_corrupt, "checkpoint cursor has an invalid phase");
  st.cursor.phase = static_cast<TrainPhase>(phase);
  st.cursor.stage = r.get<std::int32_t>();
  st.cursor.epoch = r.get<std::int32_t>();
  st.cursor.batch = r.get<std::uint64_t>();
  st.cursor.step = r.get<std::uint64_t>();

  const auto slots = r.get<std::uint32_t>();
  require(slots == layout.size(), ErrorKind::checkpoint_corrupt, "checkpoint moment table has the wrong length");
  st.moments.resize(slots);
  for (std::uint32_t id = 0; id < slots; ++id) {
    if (r.get<std::uint8_t>() == 0) continue;
    AdamSlot slot;
    slot.t = r.get<std::uint64_t>();
    const Shape4 shape = read_shape(r);
    require(shape == layout[id].shape, ErrorKind::shape_mismatch, "moment shape mismatch for " + layout[id].name);
    slot.m = Tensor<float>(shape);
    slot.v = Tensor<float>(shape);
    r.floats(slot.m);
    r.floats(slot.v);
    st.moments[id] = std::move(slot);
  }

  const auto rows = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < rows; ++i) {
    HistoryRow row;
    row.step = r.get<std::uint64_t>();
    row.phase = static_cast<TrainPhase>(r.get<std::uint8_t>());
    row.stage = r.get<std::int32_t>();
    row.epoch = r.get<std::int32_t>();
    row.loss.active = LossSet::from_bits(r.get<std::uint8_t>());
    row.loss.parts.rec = r.optional();
    row.loss.parts.adv_g = r.optional();
    row.loss.parts.adv_d = r.optional();
    row.loss.parts.ssim = r.optional();
    row.loss.parts.mask = r.optional();
    row.loss.total = r.get<double>();
    st.history.push_back(row);
  }

  const auto boundaries = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < boundaries; ++i) {
    StageBoundary b;
    b.phase = static_cast<TrainPhase>(r.get<std::uint8_t>());
    b.stage = r.get<std::int32_t>();
    b.name = r.str();
    b.step = r.get<std::uint64_t>();
    b.wall_seconds = r.get<double>();
    st.boundaries.push_back(std::move(b));
  }
  require(r.done(), ErrorKind::checkpoint_corrupt, "checkpoint has unread trailing data");
  try {
    st.config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::checkpoint_corrupt, std::string("checkpoint training config is invalid: ") + e.what());
  }
  return st;
}

}  // namespace deoccl
