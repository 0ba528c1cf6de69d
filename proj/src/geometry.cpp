#include "modseg/geometry.hpp"

#include "modseg/error.hpp"

namespace modseg {

int64_t output_size(int64_t input_side, int depth) {
  require(depth >= 2, "network depth must be >= 2, got ", depth);
  require(input_side >= 1, "input side must be positive, got ", input_side);
  int64_t side = input_side;
  for (int level = 1; level < depth; ++level) {
    side -= 4;
    require(side > 0, "invalid input size ", input_side, ": encoder level ", level,
            " convolutions reach non-positive side ", side);
    require(side % 2 == 0, "invalid input size ", input_side, ": side ", side,
            " is odd before pooling at level ", level);
    side /= 2;
  }
  side -= 4;
  require(side > 0, "invalid input size ", input_side,
          ": bottom block reaches non-positive side ", side);
  for (int level = depth - 1; level >= 1; --level) {
    side = 2 * side - 4;
    require(side > 0, "invalid input size ", input_side, ": decoder level ", level,
            " reaches non-positive side ", side);
  }
  return side;
}

std::optional<int64_t> try_output_size(int64_t input_side, int depth) {
  try {
    return output_size(input_side, depth);
  } catch (const Error&) {
    return std::nullopt;
  }
}

int64_t smallest_valid_input(int depth, int64_t min_output) {
  for (int64_t side = 8; side <= 1024; ++side) {
    const auto out = try_output_size(side, depth);
    if (out && *out >= min_output) return side;
  }
  fail("no valid input side up to 1024 reaches output ", min_output, " at depth ", depth);
}

}  // namespace modseg
