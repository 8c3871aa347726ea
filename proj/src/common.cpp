#include "rockgpt/common.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace rockgpt {
namespace {

// small fork-join pool; workers pick disjoint index ranges so the result is
// independent of how many threads run
class Pool {
 public:
  static Pool& instance() {
    static Pool p;
    return p;
  }

  void set_threads(int n) {
    std::lock_guard<std::mutex> lk(api_mu_);
    n = std::max(1, n);
    if (n == threads_) return;
    stop_workers();
    threads_ = n;
    start_workers();
  }

  int threads() const { return threads_; }

  void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    std::lock_guard<std::mutex> lk(api_mu_);
    int workers = static_cast<int>(std::min<int64_t>(threads_, n));
    if (workers <= 1) {
      fn(0, n);
      return;
    }
    job_fn_ = &fn;
    job_n_ = n;
    job_workers_ = workers;
    // every participant (caller + all workers) decrements exactly once
    pending_.store(threads_, std::memory_order_relaxed);
    {
      std::lock_guard<std::mutex> g(mu_);
      ++epoch_;
    }
    cv_.notify_all();
    // this thread takes slice 0
    run_slice(0);
    std::unique_lock<std::mutex> g(mu_);
    done_cv_.wait(g, [&] { return pending_.load(std::memory_order_acquire) == 0; });
    job_fn_ = nullptr;
  }

 private:
  Pool() : threads_(static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))) {
    start_workers();
  }
  ~Pool() { stop_workers(); }

  void run_slice(int w) {
    if (w < job_workers_) {
      int64_t chunk = (job_n_ + job_workers_ - 1) / job_workers_;
      int64_t b = w * chunk;
      int64_t e = std::min<int64_t>(job_n_, b + chunk);
      if (b < e) (*job_fn_)(b, e);
    }
    if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
      std::lock_guard<std::mutex> g(mu_);
      done_cv_.notify_all();
    }
  }

  void start_workers() {
    stop_ = false;
    for (int i = 1; i < threads_; ++i) {
      workers_.emplace_back([this, i] {
        uint64_t seen = 0;
        for (;;) {
          std::unique_lock<std::mutex> g(mu_);
          cv_.wait(g, [&] { return stop_ || epoch_ != seen; });
          if (stop_) return;
          seen = epoch_;
          g.unlock();
          run_slice(i);
        }
      });
    }
  }

  void stop_workers() {
    {
      std::lock_guard<std::mutex> g(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
  }

  std::mutex api_mu_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> workers_;
  std::atomic<int> pending_{0};
  uint64_t epoch_ = 0;
  bool stop_ = false;
  int threads_;
  const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
  int64_t job_n_ = 0;
  int job_workers_ = 0;
};

}  // namespace

void set_threads(int n) {
  if (n > 0) Pool::instance().set_threads(n);
}

int thread_count() { return Pool::instance().threads(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  Pool::instance().run(n, fn);
}

}  // namespace rockgpt
