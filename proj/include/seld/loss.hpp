#pragma once

#include <array>
#include <vector>

#include "seld/maccdoa_codec.hpp"

namespace seld {

using TrackPermutation = std::array<int, 3>;

// The six orderings of three tracks in lexicographic order; index 0 is identity.
const std::array<TrackPermutation, 6>& track_permutations();

struct LossBreakdown {
    double total = 0.0;
    std::vector<double> per_frame;       // mean over classes
    std::vector<int> chosen_permutation;  // [frame][class] -> index into track_permutations()
};

// out track t takes pred track perm[t].
MaccdoaTensor permute_tracks(const MaccdoaTensor& pred, const TrackPermutation& perm);

// Per (frame, class): min over track permutations of the MSE over all tracks
// and the (x, y, distance) components. Ties resolve to the lowest index.
LossBreakdown pit_loss(const MaccdoaTensor& pred, const MaccdoaTensor& target);

// Gradient of LossBreakdown::total with respect to pred under the given permutations.
MaccdoaTensor pit_loss_backward(const MaccdoaTensor& pred, const MaccdoaTensor& target,
                                const std::vector<int>& chosen_permutation);

}  // namespace seld
