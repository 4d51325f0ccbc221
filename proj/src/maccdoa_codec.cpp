#include "seld/maccdoa_codec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>

#include "seld/error.hpp"

namespace seld {

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

double angular_distance(double a, double b) {
    const double d = std::abs(wrap_azimuth(a - b));
    return std::min(d, 360.0 - d);
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename V>
bool parse_number(std::string_view s, V& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_int_like(std::string_view s, int& out) {
    if (parse_number(s, out)) return true;
    double d = 0.0;
    if (parse_number(s, d) && std::floor(d) == d && std::abs(d) < 1e9) {
        out = static_cast<int>(d);
        return true;
    }
    return false;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

double wrap_azimuth(double deg) {
    // In-range values pass through untouched so mirroring twice is exact.
    if (deg >= -180.0 && deg < 180.0) return deg;
    double w = std::fmod(deg + 180.0, 360.0);
    if (w < 0.0) w += 360.0;
    w -= 180.0;
    if (w >= 180.0) w -= 360.0;
    return w;
}

void sort_events(EventList& events) {
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        return std::tuple(a.frame, a.class_id, a.azimuth_deg, a.track.value_or(-1)) <
               std::tuple(b.frame, b.class_id, b.azimuth_deg, b.track.value_or(-1));
    });
}

void validate_events(const EventList& events, int frames, int classes, int tracks) {
    std::set<std::tuple<int, int, int>> seen;
    for (const Event& e : events) {
        if (e.frame < 0 || e.frame >= frames) throw InputError("event frame " + std::to_string(e.frame) + " out of range");
        if (e.class_id < 0 || e.class_id >= classes) throw InputError("event class " + std::to_string(e.class_id) + " out of range");
        if (!std::isfinite(e.azimuth_deg)) throw InputError("event azimuth must be finite");
        if (!(e.distance_m > 0.0) || !std::isfinite(e.distance_m)) throw InputError("event distance must be positive");
        if (e.track) {
            if (*e.track < 0 || *e.track >= tracks) throw InputError("event track out of range");
            if (!seen.emplace(e.frame, e.class_id, *e.track).second) {
                throw InputError("duplicate (frame, class, track) in event list");
            }
        }
    }
}

MaccdoaTensor encode(const EventList& events, int frames, int tracks, int classes) {
    validate_events(events, frames, classes, tracks);
    MaccdoaTensor out(frames, tracks, classes);

    std::map<std::pair<int, int>, std::vector<const Event*>> cells;
    for (const Event& e : events) cells[{e.frame, e.class_id}].push_back(&e);

    for (const auto& [key, cell] : cells) {
        const auto [frame, cls] = key;
        if (static_cast<int>(cell.size()) > tracks) {
            throw CapacityError("frame " + std::to_string(frame) + " class " + std::to_string(cls) + " has " +
                                std::to_string(cell.size()) + " events, capacity is " + std::to_string(tracks));
        }
        std::vector<bool> used(static_cast<std::size_t>(tracks), false);
        auto place = [&](const Event& e, int t) {
            used[t] = true;
            const double rad = e.azimuth_deg / kDegPerRad;
            out.at(frame, t, cls, 0) = std::cos(rad);
            out.at(frame, t, cls, 1) = std::sin(rad);
            out.at(frame, t, cls, 2) = e.distance_m;
        };
        for (const Event* e : cell) {
            if (e->track) place(*e, *e->track);
        }
        for (const Event* e : cell) {
            if (e->track) continue;
            const auto free = std::find(used.begin(), used.end(), false);
            place(*e, static_cast<int>(free - used.begin()));
        }
    }
    return out;
}

EventList decode(const MaccdoaTensor& tensor, double activity_threshold, double merge_radius_deg) {
    struct Cluster {
        double sum_sin = 0.0;
        double sum_cos = 0.0;
        double sum_dist = 0.0;
        int count = 0;
        int track = 0;
        double mean_az() const { return wrap_azimuth(std::atan2(sum_sin, sum_cos) * kDegPerRad); }
    };

    EventList events;
    for (int f = 0; f < tensor.frames; ++f) {
        for (int c = 0; c < tensor.classes; ++c) {
            std::vector<Cluster> clusters;
            for (int t = 0; t < tensor.tracks; ++t) {
                const double x = tensor.at(f, t, c, 0);
                const double y = tensor.at(f, t, c, 1);
                if (!(std::hypot(x, y) > activity_threshold)) continue;
                const double az = wrap_azimuth(std::atan2(y, x) * kDegPerRad);
                const double rad = az / kDegPerRad;
                auto near = std::find_if(clusters.begin(), clusters.end(), [&](const Cluster& cl) {
                    return angular_distance(cl.mean_az(), az) <= merge_radius_deg;
                });
                if (near == clusters.end()) {
                    clusters.push_back(Cluster{});
                    near = clusters.end() - 1;
                    near->track = t;
                }
                near->sum_sin += std::sin(rad);
                near->sum_cos += std::cos(rad);
                near->sum_dist += tensor.at(f, t, c, 2);
                ++near->count;
            }
            for (const Cluster& cl : clusters) {
                Event e;
                e.frame = f;
                e.class_id = c;
                // A single detection keeps its exact angle.
                e.azimuth_deg = cl.count == 1 ? wrap_azimuth(std::atan2(cl.sum_sin, cl.sum_cos) * kDegPerRad)
                                              : cl.mean_az();
                e.distance_m = std::max(cl.sum_dist / cl.count, kMinDecodedDistance);
                e.track = cl.track;
                events.push_back(e);
            }
        }
    }
    sort_events(events);
    return events;
}

EventList read_events_csv(std::istream& in) {
    EventList events;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = trim(line);
        if (row.empty() || row.front() == '#') continue;
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = row.find(',', start);
            fields.push_back(row.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        Event e;
        int track = 0;
        if (!parse_int_like(fields[0], e.frame)) {
            if (line_no == 1) continue;  // header
            throw FormatError("line " + std::to_string(line_no) + ": bad frame field");
        }
        if (fields.size() < 5 || fields.size() > 6) {
            throw FormatError("line " + std::to_string(line_no) + ": expected 5 or 6 columns");
        }
        if (!parse_int_like(fields[1], e.class_id) || !parse_int_like(fields[2], track) ||
            !parse_number(fields[3], e.azimuth_deg) || !parse_number(fields[4], e.distance_m)) {
            throw FormatError("line " + std::to_string(line_no) + ": malformed field");
        }
        if (!(e.distance_m > 0.0)) {
            throw InputError("line " + std::to_string(line_no) + ": distance must be positive");
        }
        e.azimuth_deg = wrap_azimuth(e.azimuth_deg);
        e.track = track;
        events.push_back(e);
    }
    sort_events(events);
    return events;
}

EventList read_events_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    return read_events_csv(in);
}

void write_events_csv(std::ostream& out, const EventList& events) {
    for (const Event& e : events) {
        out << e.frame << ',' << e.class_id << ',' << e.track.value_or(0) << ',' << format_double(e.azimuth_deg)
            << ',' << format_double(e.distance_m) << '\n';
    }
}

void write_events_csv(const std::filesystem::path& path, const EventList& events) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    write_events_csv(out, events);
}

}  // namespace seld
