#pragma once

#include <cstdint>
#include <optional>

namespace modseg {

// Valid-convolution size arithmetic for the UNet. Per encoder level two 3^3
// convolutions shrink each side by 4 and a 2^3 pooling halves it; the bottom
// block shrinks by 4; per decoder level the side doubles and two
// convolutions shrink it by 4 again. Throws Error naming the first violated
// stage (non-positive intermediate, or odd side before pooling).
int64_t output_size(int64_t input_side, int depth);

// Same recurrence without throwing; nullopt when the size is invalid.
std::optional<int64_t> try_output_size(int64_t input_side, int depth);

// Smallest valid input side for the given depth whose output side is at
// least min_output (used to pick inference tile sizes).
int64_t smallest_valid_input(int depth, int64_t min_output);

}  // namespace modseg
