#include "seld/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "seld/bench.hpp"
#include "seld/dataset_io.hpp"
#include "seld/error.hpp"
#include "seld/metrics.hpp"
#include "seld/model.hpp"
#include "seld/train.hpp"

namespace fs = std::filesystem;

namespace seld {

namespace {

struct Common {
    std::string workdir = ".";
    int threads = 1;
};

struct RunManifest {
    explicit RunManifest(std::string cmd) : command(std::move(cmd)) {}

    std::string command;
    std::string config;
    std::string seed;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& path) const {
        std::ofstream o(path);
        if (!o) throw InputError("cannot write run manifest " + path.string());
        o << "command=" << command << '\n'
          << "config=" << config << '\n'
          << "seed=" << seed << '\n';
        for (const auto& i : inputs) o << "input=" << i << '\n';
        for (const auto& p : outputs) o << "output=" << p << '\n';
        o << "wall_time_s=" << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << '\n'
          << "tool_version=" << kToolVersion << '\n';
    }
};

fs::path resolve(const Common& c, const std::string& p) {
    fs::path path(p);
    return path.is_relative() ? fs::path(c.workdir) / path : path;
}

std::uint64_t resolve_seed(const std::string& flag) {
    std::string text = flag;
    if (text.empty()) {
        const char* env = std::getenv("SELD_SEED");
        text = env ? env : "0";
    }
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw InputError("seed must be a non-negative integer, got " + text);
    }
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; results land by index.
template <typename Fn>
void parallel_for(int n, int threads, Fn fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, n);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = next++; i < n; i = next++) fn(i, w);
        });
    }
    for (auto& t : pool) t.join();
}

std::vector<int> parse_lengths(const std::string& spec) {
    std::vector<int> out;
    const auto dots = spec.find("..");
    try {
        if (dots != std::string::npos) {
            const int lo = std::stoi(spec.substr(0, dots));
            const int hi = std::stoi(spec.substr(dots + 2));
            if (lo <= 0 || hi < lo) throw InputError("bad length range " + spec);
            for (long l = lo; l <= hi; l *= 2) out.push_back(static_cast<int>(l));
        } else {
            std::stringstream ss(spec);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
        }
    } catch (const std::logic_error&) {
        throw InputError("bad --lengths value " + spec);
    }
    if (out.empty()) throw InputError("--lengths is empty");
    return out;
}

// ---------------------------------------------------------------- features

int cmd_features(const Common& c, const std::string& in, const std::string& out_dir, std::ostream& out,
                 std::ostream& err) {
    RunManifest run{"features"};
    const fs::path manifest = resolve(c, in);
    const fs::path dir = resolve(c, out_dir);
    run.inputs.push_back(manifest.string());
    const auto entries = read_manifest(manifest, c.workdir);
    fs::create_directories(dir);
    if (entries.empty()) err << "warning=empty_manifest path=" << manifest.string() << '\n';

    std::vector<std::vector<std::string>> produced(entries.size());
    std::vector<std::string> failures(entries.size());
    parallel_for(static_cast<int>(entries.size()), c.threads, [&](int i, int) {
        try {
            const StereoClip clip = load_wav(entries[i].audio);
            const auto segments = segment(clip, {}, kSegmentSeconds);
            const std::string stem = entries[i].audio.stem().string();
            for (std::size_t s = 0; s < segments.size(); ++s) {
                const fs::path p = dir / (segments.size() == 1 ? stem + ".seldfeat"
                                                               : stem + "_" + std::to_string(s) + ".seldfeat");
                write_feature_file(p, extract_features(segments[s].audio));
                produced[i].push_back(p.string());
            }
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });

    int failed = 0;
    std::ofstream list(dir / "features.txt");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!failures[i].empty()) {
            ++failed;
            err << "error=input file=" << entries[i].audio.string() << " message=\"" << failures[i] << "\"\n";
        }
        for (const auto& p : produced[i]) {
            list << p << '\n';
            run.outputs.push_back(p);
        }
    }
    run.write(dir / "run_manifest.txt");
    out << "clips=" << entries.size() << "\nfeature_files=" << run.outputs.size() << "\nfailed=" << failed << '\n';
    return failed > 0 ? 1 : 0;
}

// ---------------------------------------------------------------- train-toy

int cmd_train_toy(const Common& c, const std::string& config, const std::string& seed_flag, const std::string& ckpt,
                  const std::string& loss_csv, std::ostream& out, std::ostream& err) {
    RunManifest run{"train-toy"};
    KeyValues kv;
    if (!config.empty()) {
        kv = read_key_values(resolve(c, config));
        run.config = resolve(c, config).string();
    }
    const ModelConfig mc = ModelConfig::from_key_values(kv, TrainConfig::keys());
    if (mc.variant != "tiny") throw InputError("train-toy supports the tiny variant only");
    TrainConfig tc = TrainConfig::from_key_values(kv);
    if (!seed_flag.empty() || kv.find("seed") == kv.end()) tc.seed = resolve_seed(seed_flag);
    run.seed = std::to_string(tc.seed);

    const TrainingSet data = make_training_set(synth_dataset(tc.clips, tc.seed));
    SeldModel<float> model(mc);
    model.init(tc.seed);
    const TrainResult r = train(model, data, tc, [&](int step, double loss) {
        err << "progress step=" << step << " loss=" << loss << '\n';
    });

    const fs::path ckpt_path = resolve(c, ckpt);
    if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
    model.save(ckpt_path);
    const fs::path csv_path = loss_csv.empty() ? fs::path(ckpt_path.string() + ".loss.csv") : resolve(c, loss_csv);
    {
        std::ofstream csv(csv_path);
        if (!csv) throw InputError("cannot write " + csv_path.string());
        csv << "step,loss\n" << std::setprecision(9);
        for (std::size_t i = 0; i < r.step_loss.size(); ++i) csv << i << ',' << r.step_loss[i] << '\n';
    }
    run.outputs = {ckpt_path.string(), csv_path.string()};
    run.write(ckpt_path.string() + ".run.txt");

    out << std::setprecision(9) << "steps=" << tc.steps << "\ninitial_loss=" << r.initial_loss
        << "\nfinal_loss=" << r.final_loss << "\nloss_ratio=" << (r.initial_loss > 0 ? r.final_loss / r.initial_loss : 0.0)
        << "\ntrain_f20=" << r.train_metrics.f20 << "\ntrain_doae_deg=" << r.train_metrics.doae_deg
        << "\nseconds=" << r.seconds << '\n';
    return 0;
}

// ---------------------------------------------------------------- infer

int cmd_infer(const Common& c, const std::string& ckpt, const std::string& in, const std::string& out_path,
              std::ostream& out, std::ostream& err) {
    RunManifest run{"infer"};
    const fs::path ckpt_path = resolve(c, ckpt);
    if (!fs::exists(ckpt_path)) throw InputError("checkpoint not found: " + ckpt_path.string());
    const ModelConfig mc = read_checkpoint_config(ckpt_path);
    run.config = ckpt_path.string();
    const fs::path manifest = resolve(c, in);
    run.inputs = {manifest.string(), ckpt_path.string()};
    const auto entries = read_manifest(manifest, c.workdir);

    const fs::path target = resolve(c, out_path);
    const bool to_dir = entries.size() != 1 || fs::is_directory(target);
    if (to_dir) fs::create_directories(target);
    else if (target.has_parent_path()) fs::create_directories(target.parent_path());

    const int workers = std::max(1, std::min<int>(c.threads, static_cast<int>(entries.size())));
    std::vector<SeldModel<float>> models;
    for (int w = 0; w < workers; ++w) {
        models.emplace_back(mc);
        models.back().load(ckpt_path);
    }
    std::vector<EventList> results(entries.size());
    std::vector<std::string> failures(entries.size());
    parallel_for(static_cast<int>(entries.size()), workers, [&](int i, int w) {
        try {
            const auto segments = segment(load_wav(entries[i].audio), {}, kSegmentSeconds);
            for (std::size_t s = 0; s < segments.size(); ++s) {
                for (Event e : decode(models[w].forward(segments[s].audio))) {
                    e.frame += static_cast<int>(s) * mc.label_frames;
                    results[i].push_back(e);
                }
            }
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });

    int failed = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!failures[i].empty()) {
            ++failed;
            err << "error=input file=" << entries[i].audio.string() << " message=\"" << failures[i] << "\"\n";
            continue;
        }
        const fs::path csv = to_dir ? target / (entries[i].audio.stem().string() + ".csv") : target;
        write_events_csv(csv, results[i]);
        run.outputs.push_back(csv.string());
        out << "file=" << csv.string() << " events=" << results[i].size() << '\n';
    }
    run.write(to_dir ? target / "run_manifest.txt" : fs::path(target.string() + ".run.txt"));
    return failed > 0 ? 1 : 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Common& c, const std::string& pred, const std::string& ref, bool fold, double threshold,
             const std::string& per_class, std::ostream& out) {
    RunManifest run{"eval"};
    run.inputs = {resolve(c, pred).string(), resolve(c, ref).string()};
    const MetricsReport r = score(read_events_csv(resolve(c, pred)), read_events_csv(resolve(c, ref)), threshold, fold);
    out << std::setprecision(12);
    write_report(out, r);
    fs::path manifest_path = fs::path(c.workdir) / "run_manifest.txt";
    if (!per_class.empty()) {
        const fs::path p = resolve(c, per_class);
        std::ofstream csv(p);
        if (!csv) throw InputError("cannot write " + p.string());
        write_per_class_csv(csv, r);
        run.outputs.push_back(p.string());
        manifest_path = p.string() + ".run.txt";
    }
    run.write(manifest_path);
    return 0;
}

// ---------------------------------------------------------------- bench-scan

int cmd_bench(const Common& c, const std::string& lengths, int d_state, int repeats, int chunk, std::ostream& out) {
    RunManifest run{"bench-scan"};
    const auto rows = bench_scan(parse_lengths(lengths), d_state, repeats, chunk);
    out << "length,median_s,ns_per_step,steps_per_s,ratio,max_abs_diff,macs_per_step\n" << std::setprecision(6);
    for (const BenchRow& r : rows) {
        out << r.length << ',' << r.median_seconds << ',' << r.ns_per_step << ',' << r.steps_per_second << ','
            << r.ratio_to_previous << ',' << r.max_abs_diff << ',' << r.macs_per_step << '\n';
    }
    run.write(fs::path(c.workdir) / "run_manifest.txt");
    return 0;
}

// ---------------------------------------------------------------- count

int cmd_count(const Common& c, const std::string& config, const std::string& variant, std::ostream& out) {
    RunManifest run{"count"};
    KeyValues kv;
    if (!config.empty()) {
        kv = read_key_values(resolve(c, config));
        run.config = resolve(c, config).string();
    }
    if (!variant.empty()) kv["variant"] = variant;
    const ModelConfig mc = ModelConfig::from_key_values(kv, TrainConfig::keys());
    const Complexity cx = count_params_and_macs(mc);
    out << "variant=" << mc.variant << "\nparams=" << cx.params << "\nmacs=" << cx.macs
        << "\nencoder_params=" << cx.encoder_params << "\nencoder_macs=" << cx.encoder_macs
        << "\nencoder_frames=" << mc.encoder_frames(251) << '\n';
    if (mc.variant == "full") {
        // Reference point: 76M parameters, 4.63G MACs on 5 s input.
        const bool params_ok = cx.params >= 65'000'000 && cx.params <= 87'000'000;
        const bool macs_ok = cx.macs >= 3'500'000'000ull && cx.macs <= 5'800'000'000ull;
        out << "reference_params=76000000\nreference_macs=4630000000\nparams_in_band=" << params_ok
            << "\nmacs_in_band=" << macs_ok << '\n';
    }
    run.write(fs::path(c.workdir) / "run_manifest.txt");
    return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stereo sound event localization and detection"};
    app.name("seld");
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    Common common;
    app.add_option("--workdir", common.workdir, "Base directory for relative paths");
    app.add_option("--threads", common.threads, "Worker threads; 1 is bit-reproducible")->check(CLI::PositiveNumber);

    std::string in, out_path, config, seed, ckpt, loss_csv, pred, ref, per_class, variant;
    std::string lengths = "1024..32768";
    int d_state = 64, repeats = 5, chunk = 64;
    bool fold = false;
    double threshold = kAngleThresholdDeg;

    auto* features = app.add_subcommand("features", "Extract SELDFEAT feature files");
    features->add_option("--in", in, "Manifest of audio_path[,label_path] lines")->required();
    features->add_option("--out", out_path, "Output directory")->required();

    auto* train_toy = app.add_subcommand("train-toy", "Train the tiny model on synthetic clips");
    train_toy->add_option("--config", config, "key=value config file");
    train_toy->add_option("--seed", seed, "Seed (falls back to SELD_SEED)");
    train_toy->add_option("--out", ckpt, "Checkpoint path")->required();
    train_toy->add_option("--loss-csv", loss_csv, "Loss curve CSV (default <out>.loss.csv)");

    auto* infer = app.add_subcommand("infer", "Decode events with a checkpoint");
    infer->add_option("--ckpt", ckpt, "Checkpoint path")->required();
    infer->add_option("--in", in, "Manifest of audio files")->required();
    infer->add_option("--out", out_path, "CSV path, or directory for several clips")->required();

    auto* eval = app.add_subcommand("eval", "Score predicted events against references");
    eval->add_option("--pred", pred, "Predicted events CSV")->required();
    eval->add_option("--ref", ref, "Reference events CSV")->required();
    eval->add_flag("--fold-frontback", fold, "Fold azimuths to [-90, 90] before scoring");
    eval->add_option("--threshold", threshold, "Angular threshold in degrees");
    eval->add_option("--per-class", per_class, "Write per-class CSV here");

    auto* bench = app.add_subcommand("bench-scan", "Time the chunked selective scan");
    bench->add_option("--lengths", lengths, "Range lo..hi (doubling) or comma list");
    bench->add_option("--d-state", d_state, "State size")->check(CLI::PositiveNumber);
    bench->add_option("--repeats", repeats, "Timed repeats per length")->check(CLI::PositiveNumber);
    bench->add_option("--chunk", chunk, "Chunk length")->check(CLI::PositiveNumber);

    auto* count = app.add_subcommand("count", "Report parameter and MAC counts");
    count->add_option("--config", config, "key=value config file");
    count->add_option("--variant", variant, "tiny or full");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error=usage message=\"" << e.what() << "\"\n";
        return 1;
    }

    try {
        if (*features) return cmd_features(common, in, out_path, out, err);
        if (*train_toy) return cmd_train_toy(common, config, seed, ckpt, loss_csv, out, err);
        if (*infer) return cmd_infer(common, ckpt, in, out_path, out, err);
        if (*eval) return cmd_eval(common, pred, ref, fold, threshold, per_class, out);
        if (*bench) return cmd_bench(common, lengths, d_state, repeats, chunk, out);
        if (*count) return cmd_count(common, config, variant, out);
    } catch (const NumericalError& e) {
        err << "error=numerical message=\"" << e.what() << "\"\n";
        return 2;
    } catch (const InputError& e) {
        err << "error=input message=\"" << e.what() << "\"\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error=input message=\"" << e.what() << "\"\n";
        return 1;
    }
    return 1;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cli_main(args, std::cout, std::cerr);
}

}  // namespace seld
