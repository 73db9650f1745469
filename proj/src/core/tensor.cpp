#include "tfnet/core/tensor.hpp"

namespace tfnet {

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) +
         "," + std::to_string(s[3]) + "]";
}

}  // namespace tfnet
