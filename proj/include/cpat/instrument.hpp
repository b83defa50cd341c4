#pragma once

#include <cstdint>

namespace cpat {

// Multiply-accumulate and FFT-call counters. A scope attaches to the current
// thread; kernels report into every scope active on that thread, so nested
// scopes see their own sub-totals while an enclosing scope sees the sum.
// No scope active -> counting is a no-op.
class CounterScope {
public:
    CounterScope() : parent_(tls_head()) { tls_head() = this; }
    ~CounterScope() { tls_head() = parent_; }

    CounterScope(const CounterScope&) = delete;
    CounterScope& operator=(const CounterScope&) = delete;

    uint64_t macs() const { return macs_; }
    uint64_t fft_calls() const { return fft_calls_; }

    static void add_macs(uint64_t n) {
        for (CounterScope* s = tls_head(); s; s = s->parent_) s->macs_ += n;
    }
    static void add_fft_call() {
        for (CounterScope* s = tls_head(); s; s = s->parent_) s->fft_calls_ += 1;
    }

private:
    static CounterScope*& tls_head() {
        thread_local CounterScope* head = nullptr;
        return head;
    }

    CounterScope* parent_ = nullptr;
    uint64_t macs_ = 0;
    uint64_t fft_calls_ = 0;
};

} // namespace cpat
