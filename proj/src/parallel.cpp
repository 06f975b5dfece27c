#include "hdrfuse/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace hdrfuse {

namespace {

std::atomic<int> g_requested_threads{0};
thread_local bool g_in_worker = false;

int resolve_thread_count() {
    int n = g_requested_threads.load();
    if (n <= 0) {
        if (const char* env = std::getenv("HDRFUSE_THREADS")) {
            n = std::atoi(env);
        }
    }
    if (n <= 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
    }
    if (n < 1) n = 1;
    if (n > 64) n = 64;
    return n;
}

// Minimal persistent pool. Jobs are (begin, end) range calls; the submitting
// thread participates, so a pool of size N uses N-1 workers. Workers spin
// briefly before sleeping: most kernels here run for well under a
// millisecond, and a condvar wakeup would miss them entirely.
class Pool {
public:
    explicit Pool(int threads) {
        for (int i = 0; i + 1 < threads; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        stop_.store(true);
        generation_.fetch_add(1);
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    int size() const { return static_cast<int>(workers_.size()) + 1; }

    void run(std::int64_t n, std::int64_t chunk,
             const std::function<void(std::int64_t, std::int64_t)>& fn) {
        chunk_fn_.store(&fn);
        total_.store(n);
        chunk_.store(chunk);
        next_.store(0);
        pending_.store(static_cast<int>(workers_.size()));
        generation_.fetch_add(1);
        cv_.notify_all();
        drain(fn);
        // Spin briefly for the common sub-ms tail, then yield so an
        // oversubscribed machine can schedule the stragglers.
        for (long spin = 0; pending_.load(std::memory_order_acquire) != 0; ++spin) {
            if (spin > 100000) std::this_thread::yield();
        }
    }

private:
    void drain(const std::function<void(std::int64_t, std::int64_t)>& fn) {
        const std::int64_t total = total_.load(std::memory_order_relaxed);
        const std::int64_t chunk = chunk_.load(std::memory_order_relaxed);
        for (;;) {
            std::int64_t b = next_.fetch_add(chunk);
            if (b >= total) break;
            std::int64_t e = std::min(b + chunk, total);
            fn(b, e);
        }
    }

    void worker_loop() {
        g_in_worker = true;
        // Start from the construction-time generation (0): a job submitted
        // before this thread spun up must still be acknowledged.
        std::uint64_t seen = 0;
        for (;;) {
            // Spin for a while, then block on the condvar.
            std::uint64_t gen = generation_.load(std::memory_order_acquire);
            if (gen == seen) {
                bool woke = false;
                for (int spin = 0; spin < 8192; ++spin) {
                    gen = generation_.load(std::memory_order_acquire);
                    if (gen != seen) {
                        woke = true;
                        break;
                    }
                }
                if (!woke) {
                    std::unique_lock lock(mu_);
                    cv_.wait(lock, [&] {
                        return generation_.load(std::memory_order_acquire) != seen ||
                               stop_.load();
                    });
                    gen = generation_.load(std::memory_order_acquire);
                }
            }
            if (stop_.load()) return;
            seen = gen;
            const auto* fn = chunk_fn_.load(std::memory_order_acquire);
            if (fn) drain(*fn);
            pending_.fetch_sub(1, std::memory_order_release);
        }
    }

    std::mutex mu_;
    std::condition_variable cv_;
    std::vector<std::thread> workers_;
    std::atomic<const std::function<void(std::int64_t, std::int64_t)>*> chunk_fn_{nullptr};
    std::atomic<std::int64_t> total_{0};
    std::atomic<std::int64_t> chunk_{1};
    std::atomic<std::int64_t> next_{0};
    std::atomic<std::uint64_t> generation_{0};
    std::atomic<int> pending_{0};
    std::atomic<bool> stop_{false};
};

std::mutex g_pool_mu;
Pool* g_pool = nullptr;

Pool& pool() {
    std::unique_lock lock(g_pool_mu);
    int want = resolve_thread_count();
    if (g_pool && g_pool->size() != want) {
        delete g_pool;
        g_pool = nullptr;
    }
    if (!g_pool) g_pool = new Pool(want);
    return *g_pool;
}

}  // namespace

int thread_count() { return resolve_thread_count(); }

void set_thread_count(int n) { g_requested_threads.store(n); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn,
                  std::int64_t grain) {
    if (n <= 0) return;
    int workers = resolve_thread_count();
    // Nested calls from inside a worker run inline.
    if (workers == 1 || n < 2 || n <= grain || g_in_worker) {
        fn(0, n);
        return;
    }
    // Aim for a few chunks per worker to balance load without churn.
    std::int64_t chunk = n / (static_cast<std::int64_t>(workers) * 4);
    if (chunk < grain) chunk = grain;
    if (chunk < 1) chunk = 1;
    pool().run(n, chunk, fn);
}

void parallel_for_each(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    parallel_for(n, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace hdrfuse
