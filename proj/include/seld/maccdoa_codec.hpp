#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace seld {

inline constexpr int kLabelFrames = 50;  // 100 ms label grid over a 5 s clip
inline constexpr int kTracks = 3;
inline constexpr int kClasses = 13;
inline constexpr double kActivityThreshold = 0.5;
inline constexpr double kMergeRadiusDeg = 15.0;
// Decoded distances are floored here so every decoded event is a valid Event.
inline constexpr double kMinDecodedDistance = 0.01;

// Per label frame, track and class: (x, y, distance). Activity is the norm of (x, y).
struct MaccdoaTensor {
    int frames = kLabelFrames;
    int tracks = kTracks;
    int classes = kClasses;
    std::vector<double> values;

    MaccdoaTensor() : values(static_cast<std::size_t>(frames) * tracks * classes * 3, 0.0) {}
    MaccdoaTensor(int n_frames, int n_tracks, int n_classes)
        : frames(n_frames),
          tracks(n_tracks),
          classes(n_classes),
          values(static_cast<std::size_t>(n_frames) * n_tracks * n_classes * 3, 0.0) {}

    std::size_t index(int f, int t, int c, int j) const {
        return ((static_cast<std::size_t>(f) * tracks + t) * classes + c) * 3 + j;
    }
    double& at(int f, int t, int c, int j) { return values[index(f, t, c, j)]; }
    double at(int f, int t, int c, int j) const { return values[index(f, t, c, j)]; }
    bool same_shape(const MaccdoaTensor& o) const {
        return frames == o.frames && tracks == o.tracks && classes == o.classes;
    }
};

struct Event {
    int frame = 0;
    int class_id = 0;
    double azimuth_deg = 0.0;  // [-180, 180)
    double distance_m = 1.0;   // > 0
    std::optional<int> track;

    bool operator==(const Event&) const = default;
};

using EventList = std::vector<Event>;

// Sort key (frame, class, azimuth); track breaks remaining ties.
void sort_events(EventList& events);
// Throws InputError on out-of-range fields or duplicate (frame, class, track).
void validate_events(const EventList& events, int frames = kLabelFrames, int classes = kClasses,
                     int tracks = kTracks);

// Wraps into [-180, 180).
double wrap_azimuth(double deg);

// Event tracks use their hint when given, otherwise the first free slot.
// Throws CapacityError for more than `tracks` same-class events in a frame.
MaccdoaTensor encode(const EventList& events, int frames = kLabelFrames, int tracks = kTracks,
                     int classes = kClasses);

// Active iff norm(x, y) > threshold. Same-class detections within the merge
// radius in one frame collapse into one event (circular-mean azimuth, mean distance).
EventList decode(const MaccdoaTensor& tensor, double activity_threshold = kActivityThreshold,
                 double merge_radius_deg = kMergeRadiusDeg);

// CSV rows: frame,class,track,azimuth,distance[,onscreen]. Header lines are skipped.
EventList read_events_csv(std::istream& in);
EventList read_events_csv(const std::filesystem::path& path);
void write_events_csv(std::ostream& out, const EventList& events);
void write_events_csv(const std::filesystem::path& path, const EventList& events);

}  // namespace seld
