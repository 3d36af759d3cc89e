#include "deoccl/tensor.hpp"

namespace deoccl {

std::string to_string(const Shape4& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w);
}

}  // namespace deoccl
