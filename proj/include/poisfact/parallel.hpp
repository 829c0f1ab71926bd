#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace poisfact {

/// Fixed-size pool that runs a row range as contiguous chunks, one chunk per
/// worker. The calling thread works on chunk 0. Tasks must write disjoint
/// outputs; results then do not depend on the worker count.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t threads = 1) : size_(std::max<std::size_t>(threads, 1)) {
    workers_.reserve(size_ - 1);
    for (std::size_t w = 1; w < size_; ++w) workers_.emplace_back([this, w] { worker_loop(w); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    wake_.notify_all();
    for (auto& t : workers_) t.join();
  }

  std::size_t size() const noexcept { return size_; }

  /// Calls body(i) for every i in [0, count), ascending within each chunk.
  /// If any call throws, the exception from the lowest-indexed chunk is
  /// rethrown after all chunks finish; a chunk stops at its first failure.
  void for_each(std::size_t count, const std::function<void(std::size_t)>& body) {
    if (count == 0) return;
    if (size_ == 1 || count == 1) {
      for (std::size_t i = 0; i < count; ++i) body(i);
      return;
    }
    errors_.assign(size_, nullptr);
    {
      std::lock_guard lock(mutex_);
      body_ = &body;
      count_ = count;
      pending_ = size_ - 1;
      ++generation_;
    }
    wake_.notify_all();
    run_chunk(0);
    {
      std::unique_lock lock(mutex_);
      done_.wait(lock, [this] { return pending_ == 0; });
      body_ = nullptr;
    }
    for (auto& e : errors_)
      if (e) std::rethrow_exception(e);
  }

 private:
  void run_chunk(std::size_t w) {
    const std::size_t per = (count_ + size_ - 1) / size_;
    const std::size_t begin = std::min(count_, w * per);
    const std::size_t end = std::min(count_, begin + per);
    try {
      for (std::size_t i = begin; i < end; ++i) (*body_)(i);
    } catch (...) {
      errors_[w] = std::current_exception();
    }
  }

  void worker_loop(std::size_t w) {
    std::size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      run_chunk(w);
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  std::size_t size_;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* body_ = nullptr;
  std::size_t count_ = 0;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool stopping_ = false;
  std::vector<std::exception_ptr> errors_;
};

}  // namespace poisfact
