#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>

namespace modaleval {

// Milliseconds on an abstract monotonic axis. The rate limiter, retry
// backoff, and latency bookkeeping all go through this interface so tests
// can drive time without real sleeping.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() = 0;
    virtual void sleep_until_ms(std::int64_t t) = 0;

    void sleep_for_ms(std::int64_t d) { sleep_until_ms(now_ms() + d); }
};

class SystemClock final : public Clock {
public:
    std::int64_t now_ms() override {
        auto d = std::chrono::steady_clock::now() - epoch_;
        return std::chrono::duration_cast<std::chrono::milliseconds>(d).count();
    }

    void sleep_until_ms(std::int64_t t) override {
        std::this_thread::sleep_until(epoch_ + std::chrono::milliseconds(t));
    }

private:
    std::chrono::steady_clock::time_point epoch_ = std::chrono::steady_clock::now();
};

// Manual time source: sleeping jumps the clock forward, never blocks.
class SimulatedClock final : public Clock {
public:
    explicit SimulatedClock(std::int64_t start_ms = 0) : now_(start_ms) {}

    std::int64_t now_ms() override {
        std::lock_guard lk(mu_);
        return now_;
    }

    void sleep_until_ms(std::int64_t t) override {
        std::lock_guard lk(mu_);
        now_ = std::max(now_, t);
    }

    void advance_ms(std::int64_t d) {
        std::lock_guard lk(mu_);
        now_ += d;
    }

private:
    std::mutex mu_;
    std::int64_t now_;
};

inline std::shared_ptr<Clock> system_clock() {
    return std::make_shared<SystemClock>();
}

} // namespace modaleval
