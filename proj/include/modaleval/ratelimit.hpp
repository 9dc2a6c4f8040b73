#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>

#include "modaleval/clock.hpp"
#include "modaleval/errors.hpp"

namespace modaleval {

// Client-side admission control: a concurrency cap plus a sliding-window
// request rate. Grant times are monotone and each grant is at least 60s
// after the grant rpm positions earlier, so no 60-second window ever
// contains more than rpm dispatches.
class AdmissionGate {
public:
    static constexpr std::int64_t kWindowMs = 60'000;

    AdmissionGate(int max_concurrent, int requests_per_minute, std::shared_ptr<Clock> clock)
        : max_concurrent_(max_concurrent), rpm_(requests_per_minute), clock_(std::move(clock)) {
        if (!clock_) throw Error("ConfigInvalid", "admission gate needs a clock");
    }

    // Blocks until both a concurrency token and a rate slot are available;
    // returns the granted dispatch time in clock milliseconds.
    std::int64_t acquire() {
        std::int64_t slot;
        {
            std::unique_lock<std::mutex> lock(mu_);
            cv_.wait(lock, [&] { return max_concurrent_ <= 0 || active_ < max_concurrent_; });
            ++active_;
            slot = clock_->now_ms();
            if (rpm_ > 0) {
                if (!grants_.empty() && grants_.back() > slot) slot = grants_.back();
                if (static_cast<int>(grants_.size()) == rpm_ && grants_.front() + kWindowMs > slot)
                    slot = grants_.front() + kWindowMs;
                grants_.push_back(slot);
                if (static_cast<int>(grants_.size()) > rpm_) grants_.pop_front();
            }
        }
        clock_->sleep_until_ms(slot);
        return slot;
    }

    void release() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            --active_;
        }
        cv_.notify_one();
    }

    int active() const {
        std::lock_guard<std::mutex> lock(mu_);
        return active_;
    }

    class Guard {
    public:
        explicit Guard(AdmissionGate& gate) : gate_(&gate), slot_(gate.acquire()) {}
        ~Guard() {
            if (gate_) gate_->release();
        }
        Guard(const Guard&) = delete;
        Guard& operator=(const Guard&) = delete;
        std::int64_t slot() const { return slot_; }

    private:
        AdmissionGate* gate_;
        std::int64_t slot_;
    };

private:
    int max_concurrent_;
    int rpm_;
    std::shared_ptr<Clock> clock_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    int active_ = 0;
    std::deque<std::int64_t> grants_; // most recent rpm grant times, ascending
};

} // namespace modaleval
