#include "ser/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace ser {

namespace {

size_t detect_worker_count() {
  if (const char* env = std::getenv("SER_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 64) return static_cast<size_t>(v);
  }
  size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  return hw > 16 ? 16 : hw;
}

// Persistent pool: workers sleep between calls and grab chunk ids from a
// shared counter. Which worker runs a chunk is irrelevant to the result
// because chunks cover disjoint index ranges. run() does not return until
// every participating worker has left the grab loop, so per-run state is
// never observed across generations.
class Pool {
 public:
  Pool() : n_workers_(detect_worker_count()) {
    for (size_t i = 0; i + 1 < n_workers_; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(m_);
      stop_ = true;
      ++generation_;
    }
    cv_start_.notify_all();
    for (auto& t : workers_) t.join();
  }

  size_t size() const { return n_workers_; }

  void run(size_t n_chunks, const std::function<void(size_t)>& chunk_fn) {
    if (n_chunks == 0) return;
    if (n_chunks == 1 || workers_.empty()) {
      for (size_t i = 0; i < n_chunks; ++i) chunk_fn(i);
      return;
    }
    {
      std::lock_guard<std::mutex> lock(m_);
      task_ = &chunk_fn;
      n_chunks_ = n_chunks;
      next_chunk_.store(0, std::memory_order_relaxed);
      done_count_.store(0, std::memory_order_relaxed);
      ++generation_;
    }
    cv_start_.notify_all();
    grab_chunks(chunk_fn);
    std::unique_lock<std::mutex> lock(m_);
    cv_done_.wait(lock, [this] {
      return done_count_.load(std::memory_order_acquire) >= n_chunks_ &&
             active_.load(std::memory_order_acquire) == 0;
    });
    task_ = nullptr;
  }

 private:
  void grab_chunks(const std::function<void(size_t)>& task) {
    size_t i;
    while ((i = next_chunk_.fetch_add(1, std::memory_order_relaxed)) <
           n_chunks_) {
      task(i);
      done_count_.fetch_add(1, std::memory_order_acq_rel);
    }
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(size_t)>* task = nullptr;
      {
        std::unique_lock<std::mutex> lock(m_);
        cv_start_.wait(lock, [&] { return generation_ != seen || stop_; });
        if (stop_) return;
        seen = generation_;
        task = task_;
        if (task) active_.fetch_add(1, std::memory_order_relaxed);
      }
      if (!task) continue;
      grab_chunks(*task);
      {
        std::lock_guard<std::mutex> lock(m_);
        active_.fetch_sub(1, std::memory_order_acq_rel);
      }
      cv_done_.notify_all();
    }
  }

  size_t n_workers_;
  std::vector<std::thread> workers_;
  std::mutex m_;
  std::condition_variable cv_start_, cv_done_;
  uint64_t generation_ = 0;
  bool stop_ = false;
  const std::function<void(size_t)>* task_ = nullptr;
  size_t n_chunks_ = 0;
  std::atomic<size_t> next_chunk_{0};
  std::atomic<size_t> done_count_{0};
  std::atomic<size_t> active_{0};
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

size_t worker_count() { return pool().size(); }

void parallel_for(size_t n, const std::function<void(size_t, size_t)>& fn) {
  if (n == 0) return;
  size_t t = worker_count();
  if (n < 2 || t == 1) {
    fn(0, n);
    return;
  }
  size_t n_chunks = t < n ? t : n;
  pool().run(n_chunks, [&](size_t c) {
    size_t begin = n * c / n_chunks;
    size_t end = n * (c + 1) / n_chunks;
    if (begin < end) fn(begin, end);
  });
}

}  // namespace ser
