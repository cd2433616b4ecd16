// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace tcd {

// Persistent worker pool. All parallelism in the library is organized so the
// numeric result is identical for every worker count: tasks write disjoint
// outputs, and any reduction happens on the calling thread in task order.
class ThreadPool {
 public:
  static ThreadPool& instance();

  int workers() const { return workers_; }
  void set_workers(int n);

  // Runs task(0) .. task(n_tasks-1), blocking until all complete. Tasks are
  // claimed dynamically, so they must not depend on which thread runs them.
  // If several tasks throw, the exception of the lowest task index wins.
  void run_tasks(int64_t n_tasks, const std::function<void(int64_t)>& task);

 private:
  ThreadPool();
  ~ThreadPool();
  struct Impl;
  Impl* impl_;
  int workers_ = 1;
};

// Splits [0, n) into one contiguous chunk per worker and runs
// body(begin, end) on each. Calls from inside a pool task run inline.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

// Same, but with chunk boundaries fixed by `grain` instead of the worker
// count. Numeric code uses this form: since each chunk is computed as one
// self-contained unit at fixed boundaries, results are bit-identical no
// matter how many workers claim chunks.
void parallel_for_grain(int64_t n, int64_t grain,
                        const std::function<void(int64_t, int64_t)>& body);

}  // namespace tcd
