#pragma once

#include <chrono>
#include <thread>

#include "semanom/errors.hpp"

namespace semanom::util {

struct RetryPolicy {
    int retries = 3; // attempts after the first one
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
};

// Runs `fn` until it returns; TransportError triggers another attempt after an
// exponentially growing pause. Other exceptions propagate immediately. The
// last TransportError is rethrown once the budget is spent.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
    auto delay = policy.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const TransportError&) {
            if (attempt >= policy.retries) throw;
        }
        if (delay.count() > 0) std::this_thread::sleep_for(delay);
        delay = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(delay.count()) * policy.multiplier));
    }
}

} // namespace semanom::util
