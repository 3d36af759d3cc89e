#include "deoccl/params.hpp"

namespace deoccl {

std::string_view group_name(Group g) {
  switch (g) {
    case Group::encoder: return "encoder";
    case Group::decoder: return "decoder";
    case Group::attention: return "attention";
    case Group::discriminator: return "discriminator";
  }
  return "?";
}

std::optional<Group> parse_group(std::string_view name) {
  for (Group g : kAllGroups)
    if (group_name(g) == name) return g;
  return std::nullopt;
}

std::string to_string(GroupSet s) {
  std::string out;
  for (Group g : kAllGroups) {
    if (!s.contains(g)) continue;
    if (!out.empty()) out += ",";
    out += group_name(g);
  }
  return out.empty() ? "-" : out;
}

ParamId ParameterLayout::add(ParamSpec spec) {
  require(!find(spec.name), ErrorKind::config, "duplicate parameter name " + spec.name);
  specs_.push_back(std::move(spec));
  return specs_.size() - 1;
}

std::optional<ParamId> ParameterLayout::find(std::string_view name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i].name == name) return i;
  return std::nullopt;
}

bool ParameterLayout::operator==(const ParameterLayout& other) const {
  if (specs_.size() != other.specs_.size()) return false;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& a = specs_[i];
    const auto& b = other.specs_[i];
    if (a.name != b.name || a.group != b.group || a.kind != b.kind || !(a.shape == b.shape))
      return false;
  }
  return true;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
ParameterStore<T>::ParameterStore(ParameterLayout layout) : layout_(std::move(layout)) {
  values_.reserve(layout_.size());
  for (const auto& spec : layout_.specs()) values_.emplace_back(spec.shape);
}

template <typename T>
GroupSet ParameterStore<T>::trainable_groups() const {
  GroupSet s;
  for (Group g : kAllGroups)
    if (trainable(g)) s.insert(g);
  return s;
}

template <typename T>
void ParameterStore<T>::set_trainable_groups(GroupSet groups) {
  for (Group g : kAllGroups) set_trainable(g, groups.contains(g));
}

template <typename T>
std::uint64_t ParameterStore<T>::checksum(Group g) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (layout_[i].group != g) continue;
    h = fnv1a(values_[i].data(), values_[i].size() * sizeof(T), h);
  }
  return h;
}

template <typename T>
std::uint64_t ParameterStore<T>::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& v : values_) h = fnv1a(v.data(), v.size() * sizeof(T), h);
  return h;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count(Group g) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (layout_[i].group == g && is_learnable(layout_[i].kind)) n += values_[i].size();
  return n;
}

template <typename T>
Gradients<T>::Gradients(const ParameterLayout& layout) {
  grads_.reserve(layout.size());
  for (const auto& spec : layout.specs())
    grads_.emplace_back(is_learnable(spec.kind) ? Tensor<T>(spec.shape) : Tensor<T>());
}

template <typename T>
void Gradients<T>::zero() {
  for (auto& g : grads_) g.fill(T(0));
  touched_ = GroupSet{};
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Gradients<float>;
template class Gradients<double>;

}  // namespace deoccl
