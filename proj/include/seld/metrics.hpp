#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "seld/maccdoa_codec.hpp"

namespace seld {

inline constexpr double kAngleThresholdDeg = 20.0;

// min(|a - b|, 360 - |a - b|) after wrapping, in [0, 180].
double angular_error(double az_a, double az_b);

// Maps azimuth onto [-90, 90] by mirroring about the interaural axis.
double fold_frontback(double az);

// Minimum-cost assignment for a rows x cols cost matrix (row-major).
// Returns, per row, the assigned column or -1 when rows > cols.
std::vector<int> hungarian(const std::vector<double>& cost, int rows, int cols);
// Exhaustive reference for small matrices.
std::vector<int> assign_brute_force(const std::vector<double>& cost, int rows, int cols);

struct MatchedPair {
    std::size_t pred_index = 0;
    std::size_t ref_index = 0;
    int class_id = 0;
    double angular_error_deg = 0.0;
    double relative_distance_error = 0.0;
};

struct Matching {
    std::vector<MatchedPair> pairs;
    std::vector<std::size_t> unmatched_pred;
    std::vector<std::size_t> unmatched_ref;
};

// Per (frame, class) optimal assignment minimizing total angular error.
Matching match_events(const EventList& pred, const EventList& ref);

struct ClassMetrics {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t matched = 0;
    double angular_sum = 0.0;
    double distance_sum = 0.0;

    double f20() const;
    // NaN when nothing was matched.
    double doae() const;
    double rde() const;
    void merge(const ClassMetrics& o);
};

struct MetricsReport {
    double f20 = 0.0;
    double doae_deg = 0.0;
    double rde = 0.0;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t matched = 0;
    std::vector<ClassMetrics> per_class;
};

// Accumulates clip-level scores; clips are independent so counts and error sums add.
class MetricsAccumulator {
public:
    explicit MetricsAccumulator(int classes = kClasses, double threshold_deg = kAngleThresholdDeg,
                                bool fold = false);
    void add(const EventList& pred, const EventList& ref);
    MetricsReport report() const;

private:
    double threshold_;
    bool fold_;
    std::vector<ClassMetrics> per_class_;
};

MetricsReport score(const EventList& pred, const EventList& ref, double angle_threshold_deg = kAngleThresholdDeg,
                    bool fold = false);

// Azimuth mirrored (az -> -az); pairs with swapping the stereo channels.
EventList acs_transform_labels(const EventList& events);

void write_report(std::ostream& out, const MetricsReport& report);
void write_per_class_csv(std::ostream& out, const MetricsReport& report);

}  // namespace seld
