#include "dpmn/threads.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace dpmn {
namespace {

std::atomic<int> g_threads{1};
thread_local bool g_in_parallel = false;

// Minimal persistent pool. Chunk c of a job always covers the same index
// range regardless of which worker picks it up, and chunks write disjoint
// outputs, so results are bitwise identical for any thread count.
class Pool {
public:
    static Pool& instance() {
        static Pool p;
        return p;
    }

    void run(int nchunks, i64 n, const std::function<void(i64, i64)>& fn) {
        std::lock_guard<std::mutex> serial(run_m_);  // one job at a time
        ensure(nchunks - 1);
        {
            std::lock_guard<std::mutex> lk(m_);
            job_ = &fn;
            job_n_ = n;
            job_chunks_ = nchunks;
            next_chunk_.store(0, std::memory_order_relaxed);
            pending_ = static_cast<int>(workers_.size());
            ++generation_;
        }
        cv_.notify_all();

        work(n, nchunks);  // participate

        std::unique_lock<std::mutex> lk(m_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(m_);
            quit_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (std::thread& t : workers_) t.join();
    }

private:
    void ensure(int n) {
        while (static_cast<int>(workers_.size()) < n) {
            workers_.emplace_back([this] { loop(); });
        }
    }

    void loop() {
        u64 seen = 0;
        for (;;) {
            i64 n;
            i64 chunks;
            {
                std::unique_lock<std::mutex> lk(m_);
                cv_.wait(lk, [&] { return generation_ != seen; });
                if (quit_) return;
                seen = generation_;
                n = job_n_;
                chunks = job_chunks_;
            }
            work(n, chunks);
            {
                std::lock_guard<std::mutex> lk(m_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    void work(i64 n, i64 chunks) {
        g_in_parallel = true;
        for (;;) {
            const i64 c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
            if (c >= chunks) break;
            const i64 b = n * c / chunks;
            const i64 e = n * (c + 1) / chunks;
            if (b < e) (*job_)(b, e);
        }
        g_in_parallel = false;
    }

    std::mutex run_m_, m_;
    std::condition_variable cv_, done_cv_;
    std::vector<std::thread> workers_;
    const std::function<void(i64, i64)>* job_ = nullptr;
    i64 job_n_ = 0;
    i64 job_chunks_ = 1;
    int pending_ = 0;
    u64 generation_ = 0;
    bool quit_ = false;
    std::atomic<i64> next_chunk_{0};
};

}  // namespace

void set_threads(int n) {
    if (n < 1) n = 1;
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw > 0 && n > 4 * hw) n = 4 * hw;
    g_threads.store(n, std::memory_order_relaxed);
}

int thread_count() { return g_threads.load(std::memory_order_relaxed); }

void parallel_for(i64 n, const std::function<void(i64, i64)>& fn, i64 min_grain) {
    if (n <= 0) return;
    const int t = thread_count();
    if (t <= 1 || g_in_parallel || n < 2 * min_grain) {  // nested calls run inline
        fn(0, n);
        return;
    }
    const i64 nchunks = std::min<i64>(t, (n + min_grain - 1) / min_grain);
    if (nchunks <= 1) {
        fn(0, n);
        return;
    }
    Pool::instance().run(static_cast<int>(nchunks), n, fn);
}

}  // namespace dpmn
