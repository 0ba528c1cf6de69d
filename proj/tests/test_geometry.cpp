#include <doctest.h>

#include "modseg/error.hpp"
#include "modseg/geometry.hpp"

using namespace modseg;

TEST_CASE("reference patch geometry: 108 -> 20 at depth 4") {
  CHECK(output_size(108, 4) == 20);
}

TEST_CASE("derived sizes at depth 4") {
  // recurrence: per level convs -4 then halve, bottom -4, decoder 2x then -4
  CHECK(output_size(92, 4) == 4);
  CHECK(output_size(100, 4) == 12);
  CHECK(output_size(116, 4) == 28);
  CHECK(output_size(124, 4) == 36);
}

TEST_CASE("invalid sizes report the first violated stage") {
  CHECK_THROWS_WITH_AS(output_size(64, 4), doctest::Contains("invalid input size"), Error);
  CHECK_THROWS_AS(output_size(96, 4), Error);   // odd side before the third pooling
  CHECK_THROWS_AS(output_size(20, 4), Error);   // non-positive intermediate
  CHECK_THROWS_AS(output_size(8, 2), Error);
  CHECK_THROWS_AS(output_size(108, 1), Error);  // depth too small
}

TEST_CASE("depth 2 and 3 sizes used by the toy configs") {
  CHECK(output_size(20, 2) == 4);
  CHECK(output_size(28, 2) == 12);
  CHECK(output_size(48, 2) == 32);
  CHECK(output_size(44, 3) == 4);
  CHECK(output_size(52, 3) == 12);
  CHECK(output_size(76, 3) == 36);
}

TEST_CASE("try_output_size mirrors the throwing variant") {
  CHECK(try_output_size(108, 4) == 20);
  CHECK_FALSE(try_output_size(64, 4).has_value());
}

TEST_CASE("smallest_valid_input finds usable inference tiles") {
  const int64_t s = smallest_valid_input(3, 32);
  CHECK(output_size(s, 3) >= 32);
  const auto below = try_output_size(s - 1, 3);
  const bool smaller_works = below.has_value() && *below >= 32;
  CHECK_FALSE(smaller_works);
  CHECK(s == 72);  // depth-3 arithmetic: output = side - 40
}
