#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ctxbank/errors.hpp"
#include "ctxbank/sampling.hpp"

using namespace ctxbank;

namespace {

// Independent reference: round-half-up of the real-valued uniform positions,
// computed in long double instead of the library's integer arithmetic.
std::vector<int> reference_span(int start, int end, int max_frames) {
  const int len = end - start + 1;
  const int k = std::min(len, max_frames);
  if (k == 1) return {start};
  std::vector<int> out;
  for (int i = 0; i < k; ++i) {
    const long double x =
        static_cast<long double>(i) * (len - 1) / (k - 1);
    out.push_back(start + static_cast<int>(std::floor(x + 0.5L)));
  }
  return out;
}

}  // namespace

TEST_CASE("frozen sampling sequences") {
  CHECK(sample_frames(32, 16) ==
        std::vector<int>{0, 2, 4, 6, 8, 10, 12, 14, 17, 19, 21, 23, 25, 27,
                         29, 31});
  CHECK(sample_frames(100, 16) ==
        std::vector<int>{0, 7, 13, 20, 26, 33, 40, 46, 53, 59, 66, 73, 79, 86,
                         92, 99});
  CHECK(sample_frames(16, 16) ==
        std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14,
                         15});
  CHECK(sample_frames(1, 16) == std::vector<int>{0});
  CHECK(sample_frames(2, 16) == std::vector<int>{0, 1});
  CHECK(sample_frames(5, 1) == std::vector<int>{0});
}

TEST_CASE("span sampling uses the window's own coordinates") {
  CHECK(span_frame_indices(10, 40, 4) == std::vector<int>{10, 20, 30, 40});
  CHECK(span_frame_indices(7, 7, 4) == std::vector<int>{7});
  CHECK(span_frame_indices(3, 4, 16) == std::vector<int>{3, 4});
  CHECK(span_frame_indices(100, 131, 2) == std::vector<int>{100, 131});
}

TEST_CASE("sampling matches the floating-point reference exhaustively") {
  for (int total = 1; total <= 100; ++total) {
    for (int n = 1; n <= 16; ++n) {
      const auto got = sample_frames(total, n);
      const auto want = reference_span(0, total - 1, n);
      REQUIRE(got == want);

      // Structural invariants: endpoint coverage, bounds, strict growth,
      // exact count.
      REQUIRE(got.size() == static_cast<std::size_t>(std::min(total, n)));
      REQUIRE(got.front() == 0);
      if (got.size() > 1) REQUIRE(got.back() == total - 1);
      for (std::size_t i = 1; i < got.size(); ++i) {
        REQUIRE(got[i] > got[i - 1]);
      }
      REQUIRE(got.back() < total);
    }
  }
}

TEST_CASE("span sampling matches the reference off origin") {
  for (int start : {0, 3, 17, 240}) {
    for (int len = 1; len <= 60; ++len) {
      for (int n = 1; n <= 8; ++n) {
        const int end = start + len - 1;
        REQUIRE(span_frame_indices(start, end, n) ==
                reference_span(start, end, n));
      }
    }
  }
}

TEST_CASE("degenerate windows are rejected") {
  CHECK_THROWS_AS(span_frame_indices(5, 4, 3), ConfigError);
  CHECK_THROWS_AS(span_frame_indices(0, 10, 0), ConfigError);
  CHECK_THROWS_AS(sample_frames(0, 4), ConfigError);
  CHECK_THROWS_AS(sample_frames(-3, 4), ConfigError);
  CHECK_THROWS_AS(sample_frames(10, 0), ConfigError);
}
