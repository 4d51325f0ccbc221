#include "seld/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "seld/error.hpp"
#include "seld/ssm_kernel.hpp"

namespace seld {

std::vector<BenchRow> bench_scan(const std::vector<int>& lengths, int d_state, int repeats, int chunk,
                                 std::uint64_t seed) {
    if (d_state <= 0 || repeats <= 0 || chunk <= 0) throw InputError("bench: d_state, repeats and chunk must be positive");
    std::vector<BenchRow> rows;
    for (int len : lengths) {
        if (len <= 0) throw InputError("bench: lengths must be positive");
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(len));
        std::uniform_real_distribution<float> sym(-0.5f, 0.5f);
        std::uniform_real_distribution<float> step(1e-3f, 1e-1f);
        ssm::SsmParams<float> p;
        p.a.resize(d_state);
        for (int n = 0; n < d_state; ++n) p.a[n] = -static_cast<float>(n + 1);
        p.b.resize(static_cast<std::size_t>(len) * d_state);
        p.c.resize(p.b.size());
        p.delta.resize(len);
        for (float& v : p.b) v = sym(rng);
        for (float& v : p.c) v = sym(rng);
        for (float& v : p.delta) v = step(rng);
        p.d = 1.0f;
        std::vector<float> x(len);
        for (float& v : x) v = 2.0f * sym(rng);
        const std::vector<float> h0(d_state, 0.0f);

        std::vector<double> times;
        ssm::ScanResult<float> chunked;
        for (int r = 0; r < repeats; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            chunked = ssm::scan_chunked<float>(p, x, h0, static_cast<std::size_t>(chunk));
            times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        std::sort(times.begin(), times.end());
        const ssm::ScanResult<float> seq = ssm::scan_sequential<float>(p, x, h0);
        BenchRow row;
        row.length = len;
        row.median_seconds = times[times.size() / 2];
        row.ns_per_step = row.median_seconds * 1e9 / len;
        row.steps_per_second = len / row.median_seconds;
        for (int k = 0; k < len; ++k) row.max_abs_diff = std::max(row.max_abs_diff, static_cast<double>(std::abs(chunked.y[k] - seq.y[k])));
        // per step: discretize (N), state update (N), readout (N) and the skip term, plus in-chunk operator work
        row.macs_per_step = static_cast<std::uint64_t>(3 * d_state + 1) + static_cast<std::uint64_t>(chunk) * d_state;
        if (!rows.empty()) row.ratio_to_previous = row.median_seconds / rows.back().median_seconds;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace seld
