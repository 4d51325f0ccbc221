#pragma once

#include <cstdint>
#include <vector>

namespace seld {

struct BenchRow {
    int length = 0;
    double median_seconds = 0.0;
    double ns_per_step = 0.0;
    double steps_per_second = 0.0;
    double ratio_to_previous = 0.0;  // 0 for the first row
    double max_abs_diff = 0.0;       // chunked vs sequential, float32
    std::uint64_t macs_per_step = 0;
};

// Times the chunked float32 selective scan on one lane of random inputs.
std::vector<BenchRow> bench_scan(const std::vector<int>& lengths, int d_state, int repeats, int chunk,
                                 std::uint64_t seed = 0);

}  // namespace seld
