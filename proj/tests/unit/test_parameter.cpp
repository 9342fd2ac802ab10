#include <doctest.h>

#include "rbms/parameter.hpp"

using namespace rbms;

TEST_CASE("regular grid covers the box endpoints") {
  ParameterBox box;
  box.lower = Vec(2);
  box.upper = Vec(2);
  box.lower << 0.0, 10.0;
  box.upper << 1.0, 20.0;
  const auto grid = regular_grid(box, {3, 2});
  REQUIRE(grid.size() == 6);
  CHECK(grid.front()[0] == 0.0);
  CHECK(grid.front()[1] == 10.0);
  CHECK(grid.back()[0] == 1.0);
  CHECK(grid.back()[1] == 20.0);
  // last axis fastest
  CHECK(grid[1][0] == 0.0);
  CHECK(grid[1][1] == 20.0);
}

TEST_CASE("single-point axis collapses to the midpoint") {
  ParameterBox box;
  box.lower = Vec::Constant(1, 2.0);
  box.upper = Vec::Constant(1, 4.0);
  const auto grid = regular_grid(box, {1});
  REQUIRE(grid.size() == 1);
  CHECK(grid[0][0] == 3.0);
}

TEST_CASE("stratified grid is seeded and stays in cells") {
  ParameterBox box;
  box.lower = Vec(2);
  box.upper = Vec(2);
  box.lower << 0.0, 0.0;
  box.upper << 1.0, 2.0;
  const auto a = stratified_grid(box, {4, 3}, 42);
  const auto b = stratified_grid(box, {4, 3}, 42);
  const auto c = stratified_grid(box, {4, 3}, 43);
  REQUIRE(a.size() == 12);
  bool equal_ab = true, equal_ac = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    equal_ab = equal_ab && a[i] == b[i];
    equal_ac = equal_ac && a[i] == c[i];
  }
  CHECK(equal_ab);
  CHECK_FALSE(equal_ac);
  for (const auto& p : a) CHECK(box.contains(p));
  // one draw per cell per axis: the first-axis values increase cell by cell
  for (int i = 0; i + 1 < 4; ++i)
    CHECK(a[static_cast<std::size_t>(3 * i)][0] < a[static_cast<std::size_t>(3 * (i + 1))][0]);
}

TEST_CASE("box validation rejects inverted bounds") {
  ParameterBox box;
  box.lower = Vec::Constant(1, 1.0);
  box.upper = Vec::Constant(1, 0.0);
  CHECK_THROWS_AS(box.validate(), Error);
}
