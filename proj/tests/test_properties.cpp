#include <doctest.h>

#include "support/support.hpp"

TEST_SUITE("properties") {

TEST_CASE("budget and partition invariants over random round sequences") {
  const auto report = batchal::testing::budget_partition_properties(150, 31);
  for (const auto& example : report.examples) MESSAGE(example);
  CHECK(report.trials == 150);
  CHECK(report.violations == 0);
}

}
