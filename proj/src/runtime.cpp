#include "a2f/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace a2f::runtime {

namespace {

int default_threads() {
    unsigned hc = std::thread::hardware_concurrency();
    return std::clamp(static_cast<int>(hc), 1, 8);
}

std::atomic<int>& slot() {
    static std::atomic<int> value{default_threads()};
    return value;
}

}  // namespace

int thread_count() { return slot().load(std::memory_order_relaxed); }

void set_thread_count(int n) {
    slot().store(n < 1 ? default_threads() : n, std::memory_order_relaxed);
}

}  // namespace a2f::runtime
