#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <random>

#include "doctest.h"
#include "rulelearn/metrics.hpp"

using namespace rulelearn;

namespace {

// brute-force re-implementation: sort candidates, average tied positions
double brute_rank(const std::vector<double>& scores, int true_candidate,
                  const std::unordered_set<int>& filter) {
  std::vector<std::pair<double, int>> kept;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (i == true_candidate || !filter.count(i))
      kept.push_back({scores[static_cast<std::size_t>(i)], i});
  std::sort(kept.begin(), kept.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  double ts = scores[static_cast<std::size_t>(true_candidate)];
  double sum = 0;
  int n = 0;
  for (int pos = 0; pos < static_cast<int>(kept.size()); ++pos)
    if (kept[static_cast<std::size_t>(pos)].first == ts) {
      sum += pos + 1;
      ++n;
    }
  return sum / n;
}

}  // namespace

TEST_CASE("filtered_rank basics") {
  CHECK(filtered_rank({0.9, 0.5, 0.1}, 0, {}) == doctest::Approx(1.0));
  CHECK(filtered_rank({0.9, 0.5, 0.1}, 1, {0}) == doctest::Approx(1.0));
  CHECK(filtered_rank({0.3, 0.3, 0.3, 0.3, 0.3}, 2, {}) == doctest::Approx(3.0));
}

TEST_CASE("filtered_rank errors") {
  try {
    filtered_rank({0.1, 0.2}, 5, {});
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IndexOutOfRange);
  }
  try {
    filtered_rank({0.1, 0.2}, 1, {1});
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IndexOutOfRange);
  }
}

TEST_CASE("mrr / hits / accuracy basics") {
  CHECK(mrr({1, 1}) == doctest::Approx(1.0));
  CHECK(hits_at_k({1, 1}, 10) == doctest::Approx(1.0));
  CHECK(mrr({2}) == doctest::Approx(0.5));
  CHECK(hits_at_k({11}, 10) == doctest::Approx(0.0));
  CHECK(hits_at_k({10}, 10) == doctest::Approx(1.0));
  CHECK(accuracy({1, 0, 1}, {1, 1, 1}) == doctest::Approx(2.0 / 3));
  try {
    mrr({});
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyInput);
  }
  try {
    hits_at_k({}, 10);
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyInput);
  }
}

TEST_CASE("metric ranges and monotonicity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> ranks;
    for (int i = 0; i < 20; ++i) ranks.push_back(1 + static_cast<int>(rng() % 30));
    double m = mrr(ranks);
    CHECK(m > 0.0);
    CHECK(m <= 1.0);
    double prev = 0.0;
    for (int k = 1; k <= 30; ++k) {
      double h = hits_at_k(ranks, k);
      CHECK(h >= prev);
      CHECK(h >= 0.0);
      CHECK(h <= 1.0);
      prev = h;
    }
  }
}

TEST_CASE("filtered rank never exceeds the unfiltered rank") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 5 + static_cast<int>(rng() % 25);
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) scores.push_back(std::round(unit(rng) * 4) / 4);  // force ties
    int truth = static_cast<int>(rng() % static_cast<unsigned>(n));
    std::unordered_set<int> filter;
    for (int i = 0; i < n; ++i)
      if (i != truth && unit(rng) < 0.3) filter.insert(i);
    double filtered = filtered_rank(scores, truth, filter);
    double unfiltered = filtered_rank(scores, truth, {});
    CHECK(filtered <= unfiltered);
    CHECK(filtered >= 1.0);
    CHECK(filtered <= static_cast<double>(n));
  }
}

TEST_CASE("oracle equivalence with the sorted-candidate implementation") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    int n = 2 + static_cast<int>(rng() % 29);
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) scores.push_back(std::round(unit(rng) * 6) / 6);
    int truth = static_cast<int>(rng() % static_cast<unsigned>(n));
    std::unordered_set<int> filter;
    for (int i = 0; i < n; ++i)
      if (i != truth && unit(rng) < 0.25) filter.insert(i);
    CHECK(filtered_rank(scores, truth, filter) == brute_rank(scores, truth, filter));
  }
}

TEST_CASE("known-true index filters per predicate and direction") {
  KnownTrueIndex kt(5);
  kt.add(0, 1, 2);
  kt.add(0, 1, 3);
  kt.add(1, 1, 4);
  auto tail = kt.filter_tail(0, 1, 2);
  CHECK(tail == std::unordered_set<int>{3});
  auto head = kt.filter_head(0, 2, 0);
  CHECK(head == std::unordered_set<int>{1});
  CHECK(kt.filter_tail(1, 1, 4).empty());
  kt.add(2, 3, 3);
  CHECK(kt.filter_unary(2, 0) == std::unordered_set<int>{3});
}
