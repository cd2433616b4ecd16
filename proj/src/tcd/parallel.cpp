// SPDX-License-Identifier: Apache-2.0
#include "tcd/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "tcd/common.hpp"

namespace tcd {

namespace {
thread_local bool inside_pool_task = false;

// One submitted run_tasks call. Workers keep the batch alive through a
// shared_ptr, so a worker that wakes up late can still touch it safely after
// the submitting call has returned.
struct Batch {
  std::function<void(int64_t)> task;
  int64_t total = 0;
  std::atomic<int64_t> next{0};
  int active = 0;  // workers currently draining, guarded by the pool mutex
  std::exception_ptr error;
  int64_t error_index = -1;
};
}  // namespace

struct ThreadPool::Impl {
  std::mutex mu;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  std::vector<std::thread> threads;
  std::shared_ptr<Batch> current;  // most recently submitted batch
  uint64_t generation = 0;
  bool quit = false;

  void worker_loop() {
    std::unique_lock<std::mutex> lock(mu);
    uint64_t seen = 0;
    for (;;) {
      cv_work.wait(lock, [&] { return quit || generation != seen; });
      if (quit) return;
      seen = generation;
      std::shared_ptr<Batch> batch = current;
      ++batch->active;
      lock.unlock();
      drain(*batch);
      lock.lock();
      if (--batch->active == 0 && batch->next.load() >= batch->total)
        cv_done.notify_all();
    }
  }

  // Claim and run tasks until the batch is exhausted. Runs unlocked.
  void drain(Batch& batch) {
    inside_pool_task = true;
    for (;;) {
      int64_t i = batch.next.fetch_add(1);
      if (i >= batch.total) break;
      try {
        batch.task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (batch.error_index < 0 || i < batch.error_index) {
          batch.error_index = i;
          batch.error = std::current_exception();
        }
      }
    }
    inside_pool_task = false;
  }
};

ThreadPool::ThreadPool() : impl_(new Impl) {}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->quit = true;
  }
  impl_->cv_work.notify_all();
  for (auto& t : impl_->threads) t.join();
  delete impl_;
}

ThreadPool& ThreadPool::instance() {
  static ThreadPool pool;
  return pool;
}

void ThreadPool::set_workers(int n) {
  if (n < 1) fail(ErrorCode::invalid_argument, "ThreadPool: workers must be >= 1");
  workers_ = n;
  // Keep n-1 helper threads; the calling thread always participates.
  while (static_cast<int>(impl_->threads.size()) < n - 1) {
    impl_->threads.emplace_back([this] { impl_->worker_loop(); });
  }
}

void ThreadPool::run_tasks(int64_t n_tasks, const std::function<void(int64_t)>& task) {
  if (n_tasks <= 0) return;
  // Nested or single-worker use degrades to a plain loop on this thread.
  if (inside_pool_task || workers_ == 1 || impl_->threads.empty() || n_tasks == 1) {
    bool was_inside = inside_pool_task;
    inside_pool_task = true;
    try {
      for (int64_t i = 0; i < n_tasks; ++i) task(i);
    } catch (...) {
      inside_pool_task = was_inside;
      throw;
    }
    inside_pool_task = was_inside;
    return;
  }

  auto batch = std::make_shared<Batch>();
  batch->task = task;
  batch->total = n_tasks;
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->current = batch;
    ++impl_->generation;
  }
  impl_->cv_work.notify_all();
  impl_->drain(*batch);
  {
    std::unique_lock<std::mutex> lock(impl_->mu);
    impl_->cv_done.wait(lock, [&] { return batch->active == 0; });
    if (batch->error) std::rethrow_exception(batch->error);
  }
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
  if (n <= 0) return;
  ThreadPool& pool = ThreadPool::instance();
  int64_t chunks = std::min<int64_t>(pool.workers(), n);
  if (chunks == 1 || inside_pool_task) {
    body(0, n);
    return;
  }
  int64_t step = (n + chunks - 1) / chunks;
  pool.run_tasks(chunks, [&](int64_t c) {
    int64_t b = c * step;
    int64_t e = std::min<int64_t>(n, b + step);
    if (b < e) body(b, e);
  });
}

void parallel_for_grain(int64_t n, int64_t grain,
                        const std::function<void(int64_t, int64_t)>& body) {
  if (n <= 0) return;
  if (grain < 1) fail(ErrorCode::invalid_argument, "parallel_for_grain: grain must be >= 1");
  int64_t chunks = (n + grain - 1) / grain;
  ThreadPool& pool = ThreadPool::instance();
  // Chunk boundaries must not depend on the worker count, so even the
  // single-worker path walks chunk by chunk.
  pool.run_tasks(chunks, [&](int64_t c) {
    int64_t b = c * grain;
    int64_t e = std::min<int64_t>(n, b + grain);
    body(b, e);
  });
}

}  // namespace tcd
