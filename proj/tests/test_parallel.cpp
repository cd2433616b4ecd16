// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "tcd/parallel.hpp"

using tcd::ThreadPool;

TEST_CASE("run_tasks executes every index exactly once") {
  ThreadPool::instance().set_workers(4);
  std::vector<std::atomic<int>> hits(257);
  ThreadPool::instance().run_tasks(257, [&](int64_t i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("the lowest-index exception wins") {
  ThreadPool::instance().set_workers(4);
  try {
    ThreadPool::instance().run_tasks(64, [&](int64_t i) {
      if (i % 7 == 3) tcd::fail(tcd::ErrorCode::numeric, "task " + std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const tcd::Error& e) {
    CHECK(std::string(e.what()) == "task 3");
  }
}

TEST_CASE("nested run_tasks executes inline without deadlock") {
  ThreadPool::instance().set_workers(3);
  std::vector<std::atomic<int>> hits(6 * 5);
  ThreadPool::instance().run_tasks(6, [&](int64_t outer) {
    ThreadPool::instance().run_tasks(
        5, [&, outer](int64_t inner) { hits[outer * 5 + inner]++; });
  });
  for (auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("parallel_for covers the range with disjoint chunks") {
  for (int workers : {1, 4}) {
    ThreadPool::instance().set_workers(workers);
    std::vector<std::atomic<int>> hits(1001);
    tcd::parallel_for(1001, [&](int64_t begin, int64_t end) {
      for (int64_t i = begin; i < end; ++i) hits[i]++;
    });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
}

TEST_CASE("parallel_for_grain chunk boundaries do not depend on workers") {
  // Record the chunk boundaries for several worker counts; the fixed grain
  // must make them identical (this is what buys bitwise reproducibility).
  auto boundaries = [](int workers) {
    ThreadPool::instance().set_workers(workers);
    std::vector<std::pair<int64_t, int64_t>> chunks(8);
    std::atomic<size_t> slot{0};
    tcd::parallel_for_grain(100, 16, [&](int64_t begin, int64_t end) {
      chunks[slot++] = {begin, end};
    });
    std::sort(chunks.begin(), chunks.begin() + slot.load());
    chunks.resize(slot.load());
    return chunks;
  };
  auto one = boundaries(1);
  auto four = boundaries(4);
  CHECK(one == four);
  REQUIRE(one.size() == 7);  // ceil(100 / 16)
  CHECK(one.front() == std::pair<int64_t, int64_t>{0, 16});
  CHECK(one.back() == std::pair<int64_t, int64_t>{96, 100});
}

TEST_CASE("chunked summation is bit-identical across worker counts") {
  // Each chunk reduces locally; the caller combines in chunk order. The sum
  // must come out bitwise equal for any worker count.
  std::vector<double> values(10007);
  tcd::Rng rng(17);
  for (double& v : values) v = rng.normal();

  auto chunked_sum = [&](int workers) {
    ThreadPool::instance().set_workers(workers);
    const int64_t grain = 64;
    std::vector<double> partial((values.size() + grain - 1) / grain, 0.0);
    tcd::parallel_for_grain(values.size(), grain, [&](int64_t begin, int64_t end) {
      double acc = 0;
      for (int64_t i = begin; i < end; ++i) acc += values[i];
      partial[begin / grain] = acc;
    });
    double total = 0;
    for (double p : partial) total += p;
    return total;
  };
  double s1 = chunked_sum(1);
  double s2 = chunked_sum(2);
  double s5 = chunked_sum(5);
  CHECK(s1 == s2);
  CHECK(s1 == s5);
}
