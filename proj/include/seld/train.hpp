#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "seld/audio_frontend.hpp"
#include "seld/dataset_io.hpp"
#include "seld/maccdoa_codec.hpp"
#include "seld/metrics.hpp"
#include "seld/model.hpp"

namespace seld {

struct TrainConfig {
    int steps = 2000;
    double lr = 1e-4;
    int batch = 4;
    int clips = 20;
    std::uint64_t seed = 0;
    int log_every = 0;  // 0 disables progress callbacks

    // Reads steps, lr, batch, clips, seed, log_every; other keys are left for the model.
    static TrainConfig from_key_values(const KeyValues& kv);
    static std::vector<std::string> keys();
};

struct TrainingSet {
    std::vector<FeatureTensor> features;
    std::vector<MaccdoaTensor> targets;
    std::vector<EventList> labels;
};

TrainingSet make_training_set(const std::vector<ClipRecord>& clips);

struct TrainResult {
    std::vector<double> step_loss;  // minibatch loss before each update
    double initial_loss = 0.0;      // mean pit_loss over the set before training
    double final_loss = 0.0;        // same, after training
    MetricsReport train_metrics;
    double seconds = 0.0;
};

// Mean pit_loss over the set, forward only.
template <typename T>
double dataset_loss(SeldModel<T>& model, const TrainingSet& data);

template <typename T>
MetricsReport evaluate(SeldModel<T>& model, const TrainingSet& data);

// Calibrates normalization statistics on the set, then runs Adam on pit_loss.
// Throws NumericalError on a non-finite loss.
template <typename T>
TrainResult train(SeldModel<T>& model, const TrainingSet& data, const TrainConfig& cfg,
                  const std::function<void(int, double)>& progress = {});

}  // namespace seld
