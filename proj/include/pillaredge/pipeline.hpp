/******************************************************************************
 * Copyright 2026 The PillarEdge Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <variant>
#include <vector>

#include "pillaredge/common.hpp"

namespace pillaredge {

/// Execution plan for the three-stage pipeline. in_flight_max bounds the
/// number of frames admitted and not yet emitted, so 1 degenerates to
/// sequential lockstep. stage_delay_ms injects synthetic per-stage latency
/// (testing and benchmarking only).
struct StagePlan {
    int queue_depth = 2;
    int in_flight_max = 4;
    std::array<double, 3> stage_delay_ms{0.0, 0.0, 0.0};

    void validate() const {
        if (queue_depth < 1) throw Error("config", "queue_depth must be >= 1");
        if (in_flight_max < 1) throw Error("config", "in_flight_max must be >= 1");
        for (double d : stage_delay_ms) {
            if (d < 0.0 || !std::isfinite(d)) throw Error("config", "stage delays must be >= 0");
        }
    }
};

struct LatencySummary {
    double mean = 0.0, p50 = 0.0, p95 = 0.0;
};

struct PipelineStats {
    size_t frames = 0;
    double wall_seconds = 0.0;
    double throughput_hz = 0.0;
    LatencySummary pre, accel, post, end_to_end;
};

namespace detail {

inline LatencySummary summarize_latencies(std::vector<double> v) {
    LatencySummary s;
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    std::sort(v.begin(), v.end());
    auto pct = [&v](double p) {
        const size_t idx = static_cast<size_t>(p * static_cast<double>(v.size() - 1));
        return v[idx];
    };
    s.p50 = pct(0.50);
    s.p95 = pct(0.95);
    return s;
}

inline void inject_delay(double ms) {
    if (ms > 0.0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

}  // namespace detail

/// Bounded FIFO channel with close semantics. push blocks while full and
/// returns false once closed; pop blocks while empty and returns nullopt
/// after close when drained.
template <typename T>
class BoundedQueue {
public:
    using value_type = T;

    explicit BoundedQueue(size_t capacity) : cap_(capacity) {}

    bool push(T v) {
        std::unique_lock<std::mutex> lock(m_);
        not_full_.wait(lock, [this] { return q_.size() < cap_ || closed_; });
        if (closed_) return false;
        q_.push_back(std::move(v));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock<std::mutex> lock(m_);
        not_empty_.wait(lock, [this] { return !q_.empty() || closed_; });
        if (q_.empty()) return std::nullopt;
        T v = std::move(q_.front());
        q_.pop_front();
        not_full_.notify_one();
        return v;
    }

    void close() {
        std::lock_guard<std::mutex> lock(m_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

private:
    std::mutex m_;
    std::condition_variable not_full_, not_empty_;
    std::deque<T> q_;
    size_t cap_;
    bool closed_ = false;
};

namespace detail {

struct StageFailure {
    uint64_t seq = 0;
    std::string kind, detail;
};

template <typename T>
struct Item {
    uint64_t seq = 0;
    std::variant<T, StageFailure> payload;
    std::chrono::steady_clock::time_point admitted;
    std::array<double, 3> stage_seconds{0.0, 0.0, 0.0};
};

/// Counting semaphore bounding admitted-but-not-emitted frames.
class InFlightGate {
public:
    explicit InFlightGate(int max) : avail_(max) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(m_);
        cv_.wait(lock, [this] { return avail_ > 0; });
        --avail_;
    }
    void release() {
        std::lock_guard<std::mutex> lock(m_);
        ++avail_;
        cv_.notify_one();
    }

private:
    std::mutex m_;
    std::condition_variable cv_;
    int avail_;
};

}  // namespace detail

/// Reference executor: one frame at a time through all three stages.
/// PreFn: In -> M1, AccelFn: M1 -> M2, PostFn: M2 -> Out.
template <typename In, typename PreFn, typename AccelFn, typename PostFn>
auto run_sequential(const std::vector<In> &inputs, PreFn &&pre, AccelFn &&accel, PostFn &&post,
                    const StagePlan &plan = {})
    -> std::pair<std::vector<decltype(post(accel(pre(std::declval<const In &>()))))>, PipelineStats> {
    plan.validate();
    using Out = decltype(post(accel(pre(std::declval<const In &>()))));
    using clock = std::chrono::steady_clock;

    std::vector<Out> outputs;
    outputs.reserve(inputs.size());
    std::array<std::vector<double>, 3> lat;
    std::vector<double> e2e;
    const auto t0 = clock::now();
    for (size_t i = 0; i < inputs.size(); ++i) {
        try {
            const auto f0 = clock::now();
            detail::inject_delay(plan.stage_delay_ms[0]);
            auto m1 = pre(inputs[i]);
            const auto f1 = clock::now();
            detail::inject_delay(plan.stage_delay_ms[1]);
            auto m2 = accel(m1);
            const auto f2 = clock::now();
            detail::inject_delay(plan.stage_delay_ms[2]);
            outputs.push_back(post(m2));
            const auto f3 = clock::now();
            lat[0].push_back(std::chrono::duration<double>(f1 - f0).count());
            lat[1].push_back(std::chrono::duration<double>(f2 - f1).count());
            lat[2].push_back(std::chrono::duration<double>(f3 - f2).count());
            e2e.push_back(std::chrono::duration<double>(f3 - f0).count());
        } catch (const Error &e) {
            throw Error("stage-failure", "frame " + std::to_string(i) + ": " + e.what());
        }
    }
    PipelineStats stats;
    stats.frames = inputs.size();
    stats.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    stats.throughput_hz = stats.wall_seconds > 0.0
                              ? static_cast<double>(stats.frames) / stats.wall_seconds
                              : 0.0;
    stats.pre = detail::summarize_latencies(lat[0]);
    stats.accel = detail::summarize_latencies(lat[1]);
    stats.post = detail::summarize_latencies(lat[2]);
    stats.end_to_end = detail::summarize_latencies(e2e);
    return {std::move(outputs), stats};
}

/// Three-stage pipelined executor: one worker per stage connected by bounded
/// FIFO queues, an in-flight gate from admission to emission, and a reorder
/// buffer at the sink keyed by sequence id. Emitted results are in input
/// order and identical to run_sequential on the same inputs.
template <typename In, typename PreFn, typename AccelFn, typename PostFn>
auto run_pipelined(const std::vector<In> &inputs, PreFn &&pre, AccelFn &&accel, PostFn &&post,
                   const StagePlan &plan = {})
    -> std::pair<std::vector<decltype(post(accel(pre(std::declval<const In &>()))))>, PipelineStats> {
    plan.validate();
    using M1 = decltype(pre(std::declval<const In &>()));
    using M2 = decltype(accel(std::declval<const M1 &>()));
    using Out = decltype(post(std::declval<const M2 &>()));
    using clock = std::chrono::steady_clock;

    BoundedQueue<detail::Item<In>> q_in(static_cast<size_t>(plan.queue_depth));
    BoundedQueue<detail::Item<M1>> q_mid(static_cast<size_t>(plan.queue_depth));
    BoundedQueue<detail::Item<M2>> q_out(static_cast<size_t>(plan.queue_depth));
    BoundedQueue<detail::Item<Out>> q_sink(static_cast<size_t>(plan.queue_depth));
    detail::InFlightGate gate(plan.in_flight_max);
    std::atomic<bool> abort{false};

    // Generic stage worker: map items from one queue to the next, converting
    // a thrown Error into a failure payload that flows to the sink.
    auto make_worker = [&abort](auto &src, auto &dst, auto fn, int stage_idx, double delay_ms) {
        return [&src, &dst, fn, stage_idx, delay_ms, &abort]() {
            while (true) {
                auto item = src.pop();
                if (!item) break;
                using DstItem = typename std::remove_reference_t<decltype(dst)>::value_type;
                DstItem next;
                next.seq = item->seq;
                next.admitted = item->admitted;
                next.stage_seconds = item->stage_seconds;
                if (std::holds_alternative<detail::StageFailure>(item->payload)) {
                    next.payload = std::get<detail::StageFailure>(item->payload);
                } else {
                    const auto t0 = clock::now();
                    try {
                        detail::inject_delay(delay_ms);
                        next.payload = fn(std::get<0>(item->payload));
                    } catch (const Error &e) {
                        next.payload = detail::StageFailure{item->seq, e.kind(), e.what()};
                        abort.store(true);
                    } catch (const std::exception &e) {
                        next.payload = detail::StageFailure{item->seq, "stage", e.what()};
                        abort.store(true);
                    }
                    next.stage_seconds[stage_idx] =
                        std::chrono::duration<double>(clock::now() - t0).count();
                }
                if (!dst.push(std::move(next))) break;
            }
            dst.close();
        };
    };

    const auto t0 = clock::now();
    std::thread feeder([&] {
        for (size_t i = 0; i < inputs.size(); ++i) {
            if (abort.load()) break;
            gate.acquire();
            detail::Item<In> item;
            item.seq = i;
            item.payload = inputs[i];
            item.admitted = clock::now();
            if (!q_in.push(std::move(item))) break;
        }
        q_in.close();
    });
    std::thread w_pre(make_worker(q_in, q_mid, std::ref(pre), 0, plan.stage_delay_ms[0]));
    std::thread w_accel(make_worker(q_mid, q_out, std::ref(accel), 1, plan.stage_delay_ms[1]));
    std::thread w_post(make_worker(q_out, q_sink, std::ref(post), 2, plan.stage_delay_ms[2]));

    // Sink: reorder by sequence id, emit in input order.
    std::vector<Out> outputs(inputs.size());
    std::vector<bool> have(inputs.size(), false);
    std::array<std::vector<double>, 3> lat;
    std::vector<double> e2e_by_seq(inputs.size(), 0.0);
    std::map<uint64_t, detail::Item<Out>> reorder;
    uint64_t next_seq = 0;
    std::optional<detail::StageFailure> failure;
    size_t emitted = 0;
    while (true) {
        auto item = q_sink.pop();
        if (!item) break;
        gate.release();
        if (std::holds_alternative<detail::StageFailure>(item->payload)) {
            if (!failure) failure = std::get<detail::StageFailure>(item->payload);
            continue;
        }
        reorder.emplace(item->seq, std::move(*item));
        while (!reorder.empty() && reorder.begin()->first == next_seq) {
            detail::Item<Out> &ready = reorder.begin()->second;
            outputs[next_seq] = std::move(std::get<0>(ready.payload));
            have[next_seq] = true;
            for (int s = 0; s < 3; ++s) lat[s].push_back(ready.stage_seconds[s]);
            e2e_by_seq[next_seq] =
                std::chrono::duration<double>(clock::now() - ready.admitted).count();
            reorder.erase(reorder.begin());
            ++next_seq;
            ++emitted;
        }
    }
    feeder.join();
    w_pre.join();
    w_accel.join();
    w_post.join();

    if (failure) {
        throw Error("stage-failure",
                    "frame " + std::to_string(failure->seq) + ": " + failure->detail);
    }
    for (size_t i = 0; i < inputs.size(); ++i) {
        if (!have[i]) throw Error("internal", "pipeline lost frame " + std::to_string(i));
    }

    PipelineStats stats;
    stats.frames = emitted;
    stats.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    stats.throughput_hz =
        stats.wall_seconds > 0.0 ? static_cast<double>(emitted) / stats.wall_seconds : 0.0;
    stats.pre = detail::summarize_latencies(lat[0]);
    stats.accel = detail::summarize_latencies(lat[1]);
    stats.post = detail::summarize_latencies(lat[2]);
    stats.end_to_end = detail::summarize_latencies(std::vector<double>(
        e2e_by_seq.begin(), e2e_by_seq.begin() + static_cast<long>(emitted)));
    return {std::move(outputs), stats};
}

}  // namespace pillaredge
