#include "seld/loss.hpp"

#include <string>

#include "seld/error.hpp"

namespace seld {

namespace {

void check_shapes(const MaccdoaTensor& pred, const MaccdoaTensor& target) {
    if (!pred.same_shape(target)) throw ShapeError("pit_loss: prediction and target shapes differ");
    if (pred.tracks != 3) throw ShapeError("pit_loss: expected 3 tracks, got " + std::to_string(pred.tracks));
}

double cell_error(const MaccdoaTensor& pred, const MaccdoaTensor& target, int f, int c, const TrackPermutation& p) {
    double sum = 0.0;
    for (int t = 0; t < 3; ++t) {
        for (int j = 0; j < 3; ++j) {
            const double d = pred.at(f, p[t], c, j) - target.at(f, t, c, j);
            sum += d * d;
        }
    }
    return sum / 9.0;
}

}  // namespace

const std::array<TrackPermutation, 6>& track_permutations() {
    static const std::array<TrackPermutation, 6> perms = {{
        {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
    }};
    return perms;
}

MaccdoaTensor permute_tracks(const MaccdoaTensor& pred, const TrackPermutation& perm) {
    MaccdoaTensor out(pred.frames, pred.tracks, pred.classes);
    for (int f = 0; f < pred.frames; ++f)
        for (int t = 0; t < pred.tracks; ++t)
            for (int c = 0; c < pred.classes; ++c)
                for (int j = 0; j < 3; ++j) out.at(f, t, c, j) = pred.at(f, perm[t], c, j);
    return out;
}

LossBreakdown pit_loss(const MaccdoaTensor& pred, const MaccdoaTensor& target) {
    check_shapes(pred, target);
    const auto& perms = track_permutations();
    LossBreakdown out;
    out.per_frame.assign(pred.frames, 0.0);
    out.chosen_permutation.assign(static_cast<std::size_t>(pred.frames) * pred.classes, 0);
    double total = 0.0;
    for (int f = 0; f < pred.frames; ++f) {
        double frame_sum = 0.0;
        for (int c = 0; c < pred.classes; ++c) {
            double best = cell_error(pred, target, f, c, perms[0]);
            int best_idx = 0;
            for (int p = 1; p < 6; ++p) {
                const double e = cell_error(pred, target, f, c, perms[p]);
                if (e < best) {
                    best = e;
                    best_idx = p;
                }
            }
            out.chosen_permutation[static_cast<std::size_t>(f) * pred.classes + c] = best_idx;
            frame_sum += best;
        }
        out.per_frame[f] = pred.classes > 0 ? frame_sum / pred.classes : 0.0;
        total += frame_sum;
    }
    const double cells = static_cast<double>(pred.frames) * pred.classes;
    out.total = cells > 0 ? total / cells : 0.0;
    return out;
}

MaccdoaTensor pit_loss_backward(const MaccdoaTensor& pred, const MaccdoaTensor& target,
                                const std::vector<int>& chosen_permutation) {
    check_shapes(pred, target);
    if (chosen_permutation.size() != static_cast<std::size_t>(pred.frames) * pred.classes) {
        throw ShapeError("pit_loss_backward: permutation table has wrong size");
    }
    const auto& perms = track_permutations();
    const double scale = 2.0 / (9.0 * pred.frames * pred.classes);
    MaccdoaTensor grad(pred.frames, pred.tracks, pred.classes);
    for (int f = 0; f < pred.frames; ++f) {
        for (int c = 0; c < pred.classes; ++c) {
            const TrackPermutation& p = perms.at(chosen_permutation[static_cast<std::size_t>(f) * pred.classes + c]);
            for (int t = 0; t < 3; ++t)
                for (int j = 0; j < 3; ++j)
                    grad.at(f, p[t], c, j) = scale * (pred.at(f, p[t], c, j) - target.at(f, t, c, j));
        }
    }
    return grad;
}

}  // namespace seld
