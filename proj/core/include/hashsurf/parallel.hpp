#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace hashsurf {

// Persistent worker pool with a fixed, even partition of [0,n) per call.
// Worker w always receives the same index range for a given (n, workers),
// which makes per-worker accumulation buffers mergeable in a fixed order.
// With one worker everything runs inline on the calling thread.
class ThreadPool {
 public:
  explicit ThreadPool(int workers);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int worker_count() const { return worker_count_; }

  // fn(worker_id, begin, end); blocks until every worker has finished.
  void run(int64_t n, const std::function<void(int, int64_t, int64_t)>& fn);

  // Reads ADAPTIVE_HASH_THREADS (>=1 caps the worker count, 1 = fully
  // deterministic mode); falls back to the hardware concurrency.
  static int default_workers();

  static void partition(int64_t n, int workers, int w, int64_t& begin, int64_t& end);

 private:
  void worker_loop(int id);

  int worker_count_ = 1;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(int, int64_t, int64_t)>* job_ = nullptr;
  int64_t job_n_ = 0;
  uint64_t generation_ = 0;
  int remaining_ = 0;
  bool stop_ = false;
};

}  // namespace hashsurf
