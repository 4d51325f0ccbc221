#include "seld/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "seld/error.hpp"
#include "seld/loss.hpp"

namespace seld {

namespace {

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InputError("config " + key + ": not a number: " + v);
    }
}

}  // namespace

std::vector<std::string> TrainConfig::keys() { return {"steps", "lr", "batch", "clips", "seed", "log_every"}; }

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
    TrainConfig c;
    auto get = [&](const char* k) -> const std::string* {
        const auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* v = get("steps")) c.steps = static_cast<int>(parse_real("steps", *v));
    if (auto* v = get("lr")) c.lr = parse_real("lr", *v);
    if (auto* v = get("batch")) c.batch = static_cast<int>(parse_real("batch", *v));
    if (auto* v = get("clips")) c.clips = static_cast<int>(parse_real("clips", *v));
    if (auto* v = get("seed")) c.seed = static_cast<std::uint64_t>(parse_real("seed", *v));
    if (auto* v = get("log_every")) c.log_every = static_cast<int>(parse_real("log_every", *v));
    if (c.steps < 0 || c.batch <= 0 || c.clips <= 0 || !(c.lr >= 0.0)) throw InputError("invalid training config");
    return c;
}

TrainingSet make_training_set(const std::vector<ClipRecord>& clips) {
    TrainingSet set;
    for (const ClipRecord& r : clips) {
        set.features.push_back(extract_features(r.audio));
        set.targets.push_back(encode(r.labels));
        set.labels.push_back(r.labels);
    }
    return set;
}

template <typename T>
double dataset_loss(SeldModel<T>& model, const TrainingSet& data) {
    double sum = 0.0;
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        sum += pit_loss(model.forward(data.features[i]), data.targets[i]).total;
    }
    return data.features.empty() ? 0.0 : sum / data.features.size();
}

template <typename T>
MetricsReport evaluate(SeldModel<T>& model, const TrainingSet& data) {
    MetricsAccumulator acc;
    for (std::size_t i = 0; i < data.features.size(); ++i) acc.add(decode(model.forward(data.features[i])), data.labels[i]);
    return acc.report();
}

template <typename T>
TrainResult train(SeldModel<T>& model, const TrainingSet& data, const TrainConfig& cfg,
                  const std::function<void(int, double)>& progress) {
    if (data.features.empty()) throw EmptyInputError("training set is empty");
    const auto start = std::chrono::steady_clock::now();
    model.calibrate(data.features);

    TrainResult result;
    result.initial_loss = dataset_loss(model, data);

    nn::AdamConfig<T> adam_cfg;
    adam_cfg.lr = static_cast<T>(cfg.lr);
    nn::Adam<T> opt(model.trainable_params(), adam_cfg);

    std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
    std::vector<std::size_t> order(data.features.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();

    for (int step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const std::size_t i = order[cursor++];
            const MaccdoaTensor pred = model.forward(data.features[i]);
            const LossBreakdown loss = pit_loss(pred, data.targets[i]);
            if (!std::isfinite(loss.total)) {
                throw NumericalError("non-finite loss at step " + std::to_string(step) + " on clip " + std::to_string(i));
            }
            batch_loss += loss.total / cfg.batch;
            MaccdoaTensor grad = pit_loss_backward(pred, data.targets[i], loss.chosen_permutation);
            for (double& g : grad.values) g /= cfg.batch;
            model.backward(grad);
        }
        result.step_loss.push_back(batch_loss);
        opt.step();
        if (progress && cfg.log_every > 0 && (step + 1) % cfg.log_every == 0) progress(step + 1, batch_loss);
    }

    result.final_loss = dataset_loss(model, data);
    if (!std::isfinite(result.final_loss)) throw NumericalError("non-finite loss after training");
    result.train_metrics = evaluate(model, data);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

template double dataset_loss(SeldModel<float>&, const TrainingSet&);
template double dataset_loss(SeldModel<double>&, const TrainingSet&);
template MetricsReport evaluate(SeldModel<float>&, const TrainingSet&);
template MetricsReport evaluate(SeldModel<double>&, const TrainingSet&);
template TrainResult train(SeldModel<float>&, const TrainingSet&, const TrainConfig&,
                           const std::function<void(int, double)>&);
template TrainResult train(SeldModel<double>&, const TrainingSet&, const TrainConfig&,
                           const std::function<void(int, double)>&);

}  // namespace seld
