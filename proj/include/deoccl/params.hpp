#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deoccl/tensor.hpp"

namespace deoccl {

enum class Group : std::uint8_t { encoder = 0, decoder = 1, attention = 2, discriminator = 3 };

inline constexpr std::array<Group, 4> kAllGroups = {Group::encoder, Group::decoder,
                                                     Group::attention, Group::discriminator};

std::string_view group_name(Group g);
std::optional<Group> parse_group(std::string_view name);

// Small value set of parameter groups.
class GroupSet {
 public:
  constexpr GroupSet() = default;
  constexpr GroupSet(std::initializer_list<Group> groups) {
    for (Group g : groups) insert(g);
  }
  constexpr void insert(Group g) { bits_ |= bit(g); }
  constexpr void erase(Group g) { bits_ &= static_cast<std::uint8_t>(~bit(g)); }
  constexpr bool contains(Group g) const { return (bits_ & bit(g)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  static constexpr GroupSet from_bits(std::uint8_t b) {
    GroupSet s;
    s.bits_ = b & 0x0f;
    return s;
  }
  constexpr bool operator==(const GroupSet&) const = default;

 private:
  static constexpr std::uint8_t bit(Group g) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(g));
  }
  std::uint8_t bits_ = 0;
};

std::string to_string(GroupSet s);

enum class ParamKind : std::uint8_t {
  weight = 0,
  bias = 1,
  scale = 2,
  shift = 3,
  running_mean = 4,
  running_var = 5,
};

// Running statistics are state, not learnable parameters.
constexpr bool is_learnable(ParamKind k) {
  return k != ParamKind::running_mean && k != ParamKind::running_var;
}

struct ParamSpec {
  std::string name;
  Group group = Group::encoder;
  ParamKind kind = ParamKind::weight;
  Shape4 shape;
  int fan_in = 1;
};

using ParamId = std::size_t;

class ParameterLayout {
 public:
  ParamId add(ParamSpec spec);

  std::size_t size() const { return specs_.size(); }
  const ParamSpec& operator[](ParamId id) const { return specs_[id]; }
  const std::vector<ParamSpec>& specs() const { return specs_; }
  std::optional<ParamId> find(std::string_view name) const;

  bool operator==(const ParameterLayout& other) const;

 private:
  std::vector<ParamSpec> specs_;
};

// Named parameter tensors, partitioned into the four groups, each group with a
// trainable flag.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  explicit ParameterStore(ParameterLayout layout);

  const ParameterLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  Tensor<T>& value(ParamId id) { return values_[id]; }
  const Tensor<T>& value(ParamId id) const { return values_[id]; }
  const T* data(ParamId id) const { return values_[id].data(); }

  bool trainable(Group g) const { return trainable_[static_cast<std::size_t>(g)]; }
  void set_trainable(Group g, bool on) { trainable_[static_cast<std::size_t>(g)] = on; }
  GroupSet trainable_groups() const;
  void set_trainable_groups(GroupSet groups);

  // FNV-1a over the raw bytes of every entry in the group (or of everything).
  std::uint64_t checksum(Group g) const;
  std::uint64_t checksum() const;

  std::size_t parameter_count(Group g) const;

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out(layout_);
    for (std::size_t i = 0; i < values_.size(); ++i) out.value(i) = tensor_cast<U>(values_[i]);
    for (Group g : kAllGroups) out.set_trainable(g, trainable(g));
    return out;
  }

 private:
  ParameterLayout layout_;
  std::vector<Tensor<T>> values_;
  std::array<bool, 4> trainable_{true, true, true, true};
};

// Gradient buffers matching a layout; only learnable entries are allocated.
template <typename T>
class Gradients {
 public:
  explicit Gradients(const ParameterLayout& layout);

  Tensor<T>& operator[](ParamId id) { return grads_[id]; }
  const Tensor<T>& operator[](ParamId id) const { return grads_[id]; }
  std::size_t size() const { return grads_.size(); }
  void zero();

  // Groups that received a contribution during backward.
  GroupSet touched() const { return touched_; }
  void mark(Group g) { touched_.insert(g); }

 private:
  std::vector<Tensor<T>> grads_;
  GroupSet touched_;
};

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace deoccl
