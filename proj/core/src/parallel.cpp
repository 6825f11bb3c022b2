#include "hashsurf/parallel.hpp"

#include <algorithm>
#include <cstdlib>

namespace hashsurf {

ThreadPool::ThreadPool(int workers) : worker_count_(std::max(1, workers)) {
  // Worker 0 is the calling thread; only spawn the extras.
  for (int id = 1; id < worker_count_; ++id) {
    threads_.emplace_back([this, id] { worker_loop(id); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadPool::partition(int64_t n, int workers, int w, int64_t& begin, int64_t& end) {
  begin = n * w / workers;
  end = n * (w + 1) / workers;
}

void ThreadPool::run(int64_t n, const std::function<void(int, int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  if (worker_count_ == 1) {
    fn(0, 0, n);
    return;
  }
  {
    std::lock_guard<std::mutex> lock(mutex_);
    job_ = &fn;
    job_n_ = n;
    remaining_ = worker_count_ - 1;
    ++generation_;
  }
  wake_.notify_all();

  int64_t begin, end;
  partition(n, worker_count_, 0, begin, end);
  if (begin < end) fn(0, begin, end);

  std::unique_lock<std::mutex> lock(mutex_);
  done_.wait(lock, [this] { return remaining_ == 0; });
  job_ = nullptr;
}

void ThreadPool::worker_loop(int id) {
  uint64_t seen = 0;
  for (;;) {
    const std::function<void(int, int64_t, int64_t)>* job = nullptr;
    int64_t n = 0;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
      n = job_n_;
    }
    int64_t begin, end;
    partition(n, worker_count_, id, begin, end);
    if (begin < end) (*job)(id, begin, end);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      --remaining_;
    }
    done_.notify_one();
  }
}

int ThreadPool::default_workers() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("ADAPTIVE_HASH_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) return std::min(hw, cap);
  }
  return hw;
}

}  // namespace hashsurf
