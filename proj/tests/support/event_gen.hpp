#pragma once

#include <cmath>
#include <random>
#include <set>
#include <utility>

#include "seld/maccdoa_codec.hpp"
#include "test_util.hpp"

namespace testutil {

// At most one event per (frame, class). Azimuths are real-valued, tracks
// are a random hint or absent.
inline seld::EventList random_events(Rng& rng, int max_events = 40) {
    std::uniform_int_distribution<int> count(0, max_events);
    std::uniform_int_distribution<int> frame(0, seld::kLabelFrames - 1);
    std::uniform_int_distribution<int> cls(0, seld::kClasses - 1);
    std::uniform_int_distribution<int> track(-1, seld::kTracks - 1);
    std::uniform_real_distribution<double> az(-180.0, 180.0);
    std::uniform_real_distribution<double> dist(0.1, 10.0);
    std::set<std::pair<int, int>> used;
    seld::EventList out;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
        seld::Event e;
        e.frame = frame(rng);
        e.class_id = cls(rng);
        if (!used.insert({e.frame, e.class_id}).second) continue;
        e.azimuth_deg = seld::wrap_azimuth(az(rng));
        e.distance_m = dist(rng);
        const int t = track(rng);
        if (t >= 0) e.track = t;
        out.push_back(e);
    }
    seld::sort_events(out);
    return out;
}

// Decoded events always carry a track; an absent hint encodes to track 0.
inline bool same_event(const seld::Event& decoded, const seld::Event& original, double az_tol_deg) {
    const double d = std::abs(decoded.azimuth_deg - original.azimuth_deg);
    return decoded.frame == original.frame && decoded.class_id == original.class_id &&
           decoded.distance_m == original.distance_m && std::min(d, 360.0 - d) <= az_tol_deg &&
           decoded.track.value_or(0) == original.track.value_or(0);
}

inline bool same_events(const seld::EventList& decoded, const seld::EventList& original, double az_tol_deg) {
    if (decoded.size() != original.size()) return false;
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        if (!same_event(decoded[i], original[i], az_tol_deg)) return false;
    }
    return true;
}

}  // namespace testutil
