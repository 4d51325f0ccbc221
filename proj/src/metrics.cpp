#include "seld/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "seld/error.hpp"

namespace seld {

double angular_error(double az_a, double az_b) {
    const double d = std::abs(std::fmod(az_a - az_b, 360.0));
    return std::min(d, 360.0 - d);
}

double fold_frontback(double az) {
    const double w = wrap_azimuth(az);
    if (w > 90.0) return 180.0 - w;
    if (w < -90.0) return -180.0 - w;
    return w;
}

std::vector<int> hungarian(const std::vector<double>& cost, int rows, int cols) {
    if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
    // Potentials method; works on n <= m, so transpose when needed.
    const bool transposed = rows > cols;
    const int n = transposed ? cols : rows;
    const int m = transposed ? rows : cols;
    auto a = [&](int i, int j) { return transposed ? cost[j * cols + i] : cost[i * cols + j]; };

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> out(rows, -1);
    for (int j = 1; j <= m; ++j) {
        if (p[j] == 0) continue;
        if (transposed) {
            out[j - 1] = p[j] - 1;
        } else {
            out[p[j] - 1] = j - 1;
        }
    }
    return out;
}

std::vector<int> assign_brute_force(const std::vector<double>& cost, int rows, int cols) {
    std::vector<int> best(rows, -1);
    if (rows == 0 || cols == 0) return best;
    const int k = std::min(rows, cols);
    // Enumerate injective maps from the smaller side into the larger one.
    const bool transposed = rows > cols;
    const int small = transposed ? cols : rows;
    const int large = transposed ? rows : cols;
    std::vector<int> idx(large);
    std::iota(idx.begin(), idx.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (int s = 0; s < small; ++s) {
            total += transposed ? cost[idx[s] * cols + s] : cost[s * cols + idx[s]];
        }
        if (total < best_cost) {
            best_cost = total;
            std::fill(best.begin(), best.end(), -1);
            for (int s = 0; s < k; ++s) {
                if (transposed) {
                    best[idx[s]] = s;
                } else {
                    best[s] = idx[s];
                }
            }
        }
    } while (std::next_permutation(idx.begin(), idx.end()));
    return best;
}

Matching match_events(const EventList& pred, const EventList& ref) {
    std::map<std::pair<int, int>, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> cells;
    for (std::size_t i = 0; i < pred.size(); ++i) cells[{pred[i].frame, pred[i].class_id}].first.push_back(i);
    for (std::size_t i = 0; i < ref.size(); ++i) cells[{ref[i].frame, ref[i].class_id}].second.push_back(i);

    Matching out;
    for (const auto& [key, cell] : cells) {
        const auto& [pi, ri] = cell;
        const int rows = static_cast<int>(pi.size());
        const int cols = static_cast<int>(ri.size());
        std::vector<double> cost(static_cast<std::size_t>(rows) * cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                cost[r * cols + c] = angular_error(pred[pi[r]].azimuth_deg, ref[ri[c]].azimuth_deg);
        const std::vector<int> assign = hungarian(cost, rows, cols);
        std::vector<bool> ref_used(cols, false);
        for (int r = 0; r < rows; ++r) {
            if (assign[r] < 0) {
                out.unmatched_pred.push_back(pi[r]);
                continue;
            }
            const Event& p = pred[pi[r]];
            const Event& q = ref[ri[assign[r]]];
            ref_used[assign[r]] = true;
            out.pairs.push_back({pi[r], ri[assign[r]], key.second, cost[r * cols + assign[r]],
                                 std::abs(p.distance_m - q.distance_m) / q.distance_m});
        }
        for (int c = 0; c < cols; ++c)
            if (!ref_used[c]) out.unmatched_ref.push_back(ri[c]);
    }
    return out;
}

double ClassMetrics::f20() const {
    const double denom = 2.0 * tp + fp + fn;
    return denom > 0 ? 2.0 * tp / denom : 0.0;
}

double ClassMetrics::doae() const {
    return matched > 0 ? angular_sum / matched : std::numeric_limits<double>::quiet_NaN();
}

double ClassMetrics::rde() const {
    return matched > 0 ? distance_sum / matched : std::numeric_limits<double>::quiet_NaN();
}

void ClassMetrics::merge(const ClassMetrics& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    matched += o.matched;
    angular_sum += o.angular_sum;
    distance_sum += o.distance_sum;
}

MetricsAccumulator::MetricsAccumulator(int classes, double threshold_deg, bool fold)
    : threshold_(threshold_deg), fold_(fold), per_class_(classes) {}

void MetricsAccumulator::add(const EventList& pred_in, const EventList& ref_in) {
    EventList pred = pred_in;
    EventList ref = ref_in;
    for (EventList* list : {&pred, &ref}) {
        for (Event& e : *list) {
            if (e.class_id < 0 || e.class_id >= static_cast<int>(per_class_.size())) {
                throw InputError("metrics: class id " + std::to_string(e.class_id) + " out of range");
            }
            if (fold_) e.azimuth_deg = fold_frontback(e.azimuth_deg);
        }
    }
    for (const Event& e : ref) {
        if (!(e.distance_m > 0.0)) throw InputError("metrics: reference distance must be positive");
    }
    const Matching m = match_events(pred, ref);
    for (const MatchedPair& p : m.pairs) {
        ClassMetrics& cm = per_class_[p.class_id];
        ++cm.matched;
        cm.angular_sum += p.angular_error_deg;
        cm.distance_sum += p.relative_distance_error;
        if (p.angular_error_deg <= threshold_) {
            ++cm.tp;
        } else {
            ++cm.fp;
            ++cm.fn;
        }
    }
    for (std::size_t i : m.unmatched_pred) ++per_class_[pred[i].class_id].fp;
    for (std::size_t i : m.unmatched_ref) ++per_class_[ref[i].class_id].fn;
}

MetricsReport MetricsAccumulator::report() const {
    MetricsReport r;
    r.per_class = per_class_;
    ClassMetrics all;
    for (const ClassMetrics& c : per_class_) all.merge(c);
    r.tp = all.tp;
    r.fp = all.fp;
    r.fn = all.fn;
    r.matched = all.matched;
    r.f20 = all.f20();
    r.doae_deg = all.doae();
    r.rde = all.rde();
    return r;
}

MetricsReport score(const EventList& pred, const EventList& ref, double angle_threshold_deg, bool fold) {
    int classes = kClasses;
    for (const EventList* list : {&pred, &ref})
        for (const Event& e : *list) classes = std::max(classes, e.class_id + 1);
    MetricsAccumulator acc(classes, angle_threshold_deg, fold);
    acc.add(pred, ref);
    return acc.report();
}

EventList acs_transform_labels(const EventList& events) {
    EventList out = events;
    for (Event& e : out) e.azimuth_deg = wrap_azimuth(-e.azimuth_deg);
    sort_events(out);
    return out;
}

void write_report(std::ostream& out, const MetricsReport& r) {
    out << "f20=" << r.f20 << '\n'
        << "doae_deg=" << r.doae_deg << '\n'
        << "rde=" << r.rde << '\n'
        << "tp=" << r.tp << '\n'
        << "fp=" << r.fp << '\n'
        << "fn=" << r.fn << '\n'
        << "matched=" << r.matched << '\n';
}

void write_per_class_csv(std::ostream& out, const MetricsReport& r) {
    out << "class,f20,doae_deg,rde,tp,fp,fn,matched\n";
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const ClassMetrics& m = r.per_class[c];
        out << c << ',' << m.f20() << ',' << m.doae() << ',' << m.rde() << ',' << m.tp << ',' << m.fp << ','
            << m.fn << ',' << m.matched << '\n';
    }
}

}  // namespace seld
