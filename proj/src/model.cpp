#include "seld/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "seld/binary_io.hpp"
#include "seld/error.hpp"

namespace seld {

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'E', 'L', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw InputError("config " + key + ": not an integer: " + v);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw InputError("config " + key + ": not a boolean: " + v);
}

std::array<int, 6> parse_six(const std::string& key, const std::string& v) {
    std::array<int, 6> out{};
    std::stringstream ss(v);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= 6) throw InputError("config " + key + ": expected 6 values");
        out[i++] = parse_int(key, trim(item));
    }
    if (i != 6) throw InputError("config " + key + ": expected 6 values");
    return out;
}

std::string join(const std::array<int, 6>& a) {
    std::string s;
    for (int i = 0; i < 6; ++i) s += (i ? "," : "") + std::to_string(a[i]);
    return s;
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("config line " + std::to_string(line_no) + ": expected key=value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

// ---------------------------------------------------------------- config

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.variant = "tiny";
    c.encoder_channels = {16, 32, 64, 64, 64, 64};
    c.time_pool_factors = {2, 2, 2, 2, 1, 1};
    c.head_hidden = 64;
    c.block.d_model = 64;
    c.block.d_state = 16;
    c.block.head_dim = 64;
    c.block.scan_chunk = 0;
    return c;
}

ModelConfig ModelConfig::full() {
    ModelConfig c;
    c.variant = "full";
    c.encoder_channels = {64, 128, 256, 512, 1024, 2048};
    // One extra time halving keeps the 5 s MAC count inside the target band.
    c.time_pool_factors = {2, 2, 2, 2, 2, 1};
    c.head_hidden = 256;
    c.block.d_model = 256;
    c.block.d_state = 64;
    c.block.head_dim = 64;
    c.block.scan_chunk = 64;
    return c;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv, const std::vector<std::string>& ignored) {
    ModelConfig c = tiny();
    if (const auto it = kv.find("variant"); it != kv.end()) {
        if (it->second == "tiny") {
            c = tiny();
        } else if (it->second == "full") {
            c = full();
        } else {
            throw InputError("config variant must be tiny or full, got " + it->second);
        }
    }
    const std::set<std::string> skip(ignored.begin(), ignored.end());
    for (const auto& [key, value] : kv) {
        if (key == "variant" || skip.count(key)) continue;
        if (key == "n_classes") c.n_classes = parse_int(key, value);
        else if (key == "n_tracks") c.n_tracks = parse_int(key, value);
        else if (key == "encoder_channels") c.encoder_channels = parse_six(key, value);
        else if (key == "time_pool_factors") c.time_pool_factors = parse_six(key, value);
        else if (key == "freq_pool_factors") c.freq_pool_factors = parse_six(key, value);
        else if (key == "interp_frames") c.interp_frames = parse_int(key, value);
        else if (key == "label_frames") c.label_frames = parse_int(key, value);
        else if (key == "head_hidden") c.head_hidden = parse_int(key, value);
        else if (key == "d_model") c.block.d_model = parse_int(key, value);
        else if (key == "d_state") c.block.d_state = parse_int(key, value);
        else if (key == "d_conv") c.block.d_conv = parse_int(key, value);
        else if (key == "expand") c.block.expand = parse_int(key, value);
        else if (key == "n_blocks") c.block.n_blocks = parse_int(key, value);
        else if (key == "head_dim") c.block.head_dim = parse_int(key, value);
        else if (key == "kernel_time") c.block.kernel_time = parse_int(key, value);
        else if (key == "kernel_freq") c.block.kernel_freq = parse_int(key, value);
        else if (key == "bidirectional") c.block.bidirectional = parse_bool(key, value);
        else if (key == "asymmetric_conv") c.block.asymmetric_conv = parse_bool(key, value);
        else if (key == "scan_chunk") c.block.scan_chunk = parse_int(key, value);
        else throw InputError("unknown config key: " + key);
    }
    c.validate();
    return c;
}

std::string ModelConfig::to_text() const {
    std::ostringstream o;
    o << "variant=" << variant << '\n'
      << "n_classes=" << n_classes << '\n'
      << "n_tracks=" << n_tracks << '\n'
      << "encoder_channels=" << join(encoder_channels) << '\n'
      << "time_pool_factors=" << join(time_pool_factors) << '\n'
      << "freq_pool_factors=" << join(freq_pool_factors) << '\n'
      << "interp_frames=" << interp_frames << '\n'
      << "label_frames=" << label_frames << '\n'
      << "head_hidden=" << head_hidden << '\n'
      << "d_model=" << block.d_model << '\n'
      << "d_state=" << block.d_state << '\n'
      << "d_conv=" << block.d_conv << '\n'
      << "expand=" << block.expand << '\n'
      << "n_blocks=" << block.n_blocks << '\n'
      << "head_dim=" << block.head_dim << '\n'
      << "kernel_time=" << block.kernel_time << '\n'
      << "kernel_freq=" << block.kernel_freq << '\n'
      << "bidirectional=" << (block.bidirectional ? 1 : 0) << '\n'
      << "asymmetric_conv=" << (block.asymmetric_conv ? 1 : 0) << '\n'
      << "scan_chunk=" << block.scan_chunk << '\n';
    return o.str();
}

void ModelConfig::validate() const {
    if (n_tracks != 3) throw InputError("n_tracks must be 3");
    if (n_classes <= 0) throw InputError("n_classes must be positive");
    for (int i = 0; i < 6; ++i) {
        if (encoder_channels[i] <= 0) throw InputError("encoder channels must be positive");
        if (time_pool_factors[i] <= 0 || freq_pool_factors[i] <= 0) throw InputError("pool factors must be positive");
    }
    if (label_frames <= 0 || interp_frames <= 0 || interp_frames % label_frames != 0) {
        throw InputError("interp_frames must be a positive multiple of label_frames");
    }
    if (head_hidden <= 0) throw InputError("head_hidden must be positive");
    block.validate();
    if (encoder_frames(251) < 2) throw InputError("time pooling leaves fewer than 2 frames for a 5 s clip");
}

int ModelConfig::encoder_frames(int input_frames) const {
    int t = input_frames;
    for (int f : time_pool_factors) t = ceil_div(t, f);
    return t;
}

int ModelConfig::encoder_freqs(int input_mels) const {
    int m = input_mels;
    for (int f : freq_pool_factors) m = ceil_div(m, f);
    return m;
}

// ---------------------------------------------------------------- counting

std::uint64_t conv2d3x3_macs(int cin, int cout, int h, int w) {
    return 9ull * cin * cout * static_cast<std::uint64_t>(h) * w;
}

Complexity count_params_and_macs(const ModelConfig& cfg, int input_frames) {
    Complexity c;
    int h = input_frames;
    int w = kMelBins;
    int cin = kFeatureChannels;
    for (int i = 0; i < 6; ++i) {
        const int cout = cfg.encoder_channels[i];
        // two convs (weights + bias) and two norms (gamma + beta)
        c.encoder_params += 9ull * cin * cout + cout + 9ull * cout * cout + cout + 4ull * cout;
        c.encoder_macs += conv2d3x3_macs(cin, cout, h, w) + conv2d3x3_macs(cout, cout, h, w);
        h = ceil_div(h, cfg.time_pool_factors[i]);
        w = ceil_div(w, cfg.freq_pool_factors[i]);
        cin = cout;
    }
    const std::uint64_t d = cfg.block.d_model;
    const std::uint64_t rows = static_cast<std::uint64_t>(h) * w;
    std::uint64_t params = c.encoder_params + static_cast<std::uint64_t>(cin) * d + d;
    std::uint64_t macs = c.encoder_macs + rows * cin * d;
    params += block_params(cfg.block) * cfg.block.n_blocks;
    macs += block_macs(cfg.block, h, w) * cfg.block.n_blocks;
    macs += static_cast<std::uint64_t>(cfg.label_frames) * h * d;  // temporal module
    const std::uint64_t hid = cfg.head_hidden;
    const std::uint64_t out = 3ull * cfg.n_tracks * cfg.n_classes;
    params += d * hid + hid + hid * out + out;
    macs += static_cast<std::uint64_t>(cfg.label_frames) * (d * hid + hid * out);
    c.params = params;
    c.macs = macs;
    return c;
}

// ---------------------------------------------------------------- temporal module

std::vector<double> temporal_weights(int in_frames, int interp_frames, int label_frames) {
    if (in_frames < 2) throw ShapeError("temporal module needs at least 2 input frames");
    if (label_frames <= 0 || interp_frames % label_frames != 0) {
        throw ShapeError("interp_frames must be a multiple of label_frames");
    }
    const int group = interp_frames / label_frames;
    std::vector<double> w(static_cast<std::size_t>(label_frames) * in_frames, 0.0);
    for (int i = 0; i < interp_frames; ++i) {
        const double pos = static_cast<double>(i) * (in_frames - 1) / (interp_frames - 1);
        const int lo = std::min(static_cast<int>(pos), in_frames - 2);
        const double frac = pos - lo;
        double* row = w.data() + static_cast<std::size_t>(i / group) * in_frames;
        row[lo] += (1.0 - frac) / group;
        row[lo + 1] += frac / group;
    }
    return w;
}

std::vector<double> temporal_module(const std::vector<double>& x, int in_frames, int dim, int interp_frames,
                                    int label_frames) {
    if (x.size() != static_cast<std::size_t>(in_frames) * dim) throw ShapeError("temporal module input shape");
    const std::vector<double> w = temporal_weights(in_frames, interp_frames, label_frames);
    std::vector<double> y(static_cast<std::size_t>(label_frames) * dim, 0.0);
    for (int o = 0; o < label_frames; ++o)
        for (int i = 0; i < in_frames; ++i) {
            const double wt = w[static_cast<std::size_t>(o) * in_frames + i];
            if (wt == 0.0) continue;
            for (int c = 0; c < dim; ++c) y[static_cast<std::size_t>(o) * dim + c] += wt * x[static_cast<std::size_t>(i) * dim + c];
        }
    return y;
}

// ---------------------------------------------------------------- model

template <typename T>
void head_activation(std::span<T> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        T& v = values[i];
        v = (i % 3 == 2) ? std::max(v, T(0)) : std::tanh(v);
    }
}

template void head_activation<float>(std::span<float>);
template void head_activation<double>(std::span<double>);

template <typename T>
SeldModel<T>::SeldModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    int cin = kFeatureChannels;
    encoder_.resize(6);
    for (int i = 0; i < 6; ++i) {
        const int cout = cfg_.encoder_channels[i];
        const std::string name = "encoder" + std::to_string(i);
        EncoderBlock& b = encoder_[i];
        b.conv1 = nn::Conv2d3x3<T>(name + ".conv1", cin, cout);
        b.conv2 = nn::Conv2d3x3<T>(name + ".conv2", cout, cout);
        b.norm1 = nn::ChannelNorm<T>(name + ".norm1", cout, false);
        b.norm2 = nn::ChannelNorm<T>(name + ".norm2", cout, false);
        b.pool = nn::MaxPool2d<T>(cfg_.time_pool_factors[i], cfg_.freq_pool_factors[i]);
        cin = cout;
    }
    proj_ = nn::Linear<T>("proj", cin, cfg_.block.d_model, true);
    for (int i = 0; i < cfg_.block.n_blocks; ++i) blocks_.emplace_back("block" + std::to_string(i), cfg_.block);
    head1_ = nn::Linear<T>("head.fc1", cfg_.block.d_model, cfg_.head_hidden, true);
    head2_ = nn::Linear<T>("head.fc2", cfg_.head_hidden, 3 * cfg_.n_tracks * cfg_.n_classes, true);
}

template <typename T>
void SeldModel<T>::init(std::uint64_t seed) {
    nn::Rng rng(seed);
    for (EncoderBlock& b : encoder_) {
        b.conv1.init(rng);
        b.conv2.init(rng);
    }
    proj_.init(rng);
    for (auto& blk : blocks_) blk.init(rng);
    head1_.init(rng);
    head2_.init(rng);
}

template <typename T>
std::vector<T> SeldModel<T>::encode(std::span<const T> x, int frames, int mels) {
    std::vector<T> cur(x.begin(), x.end());
    int h = frames;
    int w = mels;
    for (EncoderBlock& b : encoder_) {
        b.h = h;
        b.w = w;
        b.pre1 = b.norm1.forward(b.conv1.forward(cur, h, w));
        std::vector<T> a = b.pre1;
        for (T& v : a) v = std::max(v, T(0));
        b.pre2 = b.norm2.forward(b.conv2.forward(a, h, w));
        a = b.pre2;
        for (T& v : a) v = std::max(v, T(0));
        const int c = static_cast<int>(a.size() / (static_cast<std::size_t>(h) * w));
        cur = b.pool.forward(a, c, h, w);
        h = b.pool.out_h(h);
        w = b.pool.out_w(w);
    }
    enc_frames_ = h;
    enc_freqs_ = w;
    return cur;
}

template <typename T>
std::vector<T> SeldModel<T>::encode_backward(std::vector<T> grad) {
    for (auto it = encoder_.rbegin(); it != encoder_.rend(); ++it) {
        EncoderBlock& b = *it;
        std::vector<T> g = b.pool.backward(grad);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(b.pre2[i] > T(0))) g[i] = T(0);
        g = b.conv2.backward(b.norm2.backward(g));
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(b.pre1[i] > T(0))) g[i] = T(0);
        grad = b.conv1.backward(b.norm1.backward(g));
    }
    return grad;
}

template <typename T>
MaccdoaTensor SeldModel<T>::forward(const FeatureTensor& features) {
    if (features.channels != kFeatureChannels || features.mels != kMelBins) {
        throw ShapeError("model input must be [7][T][64] features");
    }
    const std::vector<T> input(features.data.begin(), features.data.end());
    const std::vector<T> enc = encode(input, features.frames, features.mels);
    const int tp = enc_frames_;
    const int fp = enc_freqs_;
    if (tp < 2) throw ShapeError("clip too short: encoder leaves fewer than 2 frames");
    const int c_enc = cfg_.encoder_channels[5];
    const int d = cfg_.block.d_model;

    // [C][T'][F'] -> [T'][F'][C]
    std::vector<T> rows(enc.size());
    for (int c = 0; c < c_enc; ++c)
        for (int p = 0; p < tp * fp; ++p) rows[static_cast<std::size_t>(p) * c_enc + c] = enc[static_cast<std::size_t>(c) * tp * fp + p];
    std::vector<T> x = proj_.forward(rows, tp * fp);
    for (auto& blk : blocks_) x = blk.forward(x, tp, fp);

    std::vector<T> pooled(static_cast<std::size_t>(tp) * d, T(0));
    for (int t = 0; t < tp; ++t)
        for (int f = 0; f < fp; ++f)
            for (int c = 0; c < d; ++c)
                pooled[static_cast<std::size_t>(t) * d + c] += x[(static_cast<std::size_t>(t) * fp + f) * d + c] / T(fp);

    temporal_ = temporal_weights(tp, cfg_.interp_frames, cfg_.label_frames);
    const int lf = cfg_.label_frames;
    std::vector<T> tm(static_cast<std::size_t>(lf) * d, T(0));
    for (int o = 0; o < lf; ++o)
        for (int i = 0; i < tp; ++i) {
            const T wt = static_cast<T>(temporal_[static_cast<std::size_t>(o) * tp + i]);
            for (int c = 0; c < d; ++c) tm[static_cast<std::size_t>(o) * d + c] += wt * pooled[static_cast<std::size_t>(i) * d + c];
        }
    nn::mac_counter() += static_cast<std::uint64_t>(lf) * tp * d;

    head1_pre_ = head1_.forward(tm, lf);
    std::vector<T> hid = head1_pre_;
    for (T& v : hid) v = nn::silu(v);
    head_out_ = head2_.forward(hid, lf);

    head_activation<T>(head_out_);
    MaccdoaTensor out(lf, cfg_.n_tracks, cfg_.n_classes);
    for (std::size_t i = 0; i < head_out_.size(); ++i) out.values[i] = static_cast<double>(head_out_[i]);
    return out;
}

template <typename T>
void SeldModel<T>::backward(const MaccdoaTensor& grad_output) {
    const int lf = cfg_.label_frames;
    const int d = cfg_.block.d_model;
    const int tp = enc_frames_;
    const int fp = enc_freqs_;
    if (grad_output.values.size() != head_out_.size()) throw ShapeError("gradient shape does not match output");

    std::vector<T> g(head_out_.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const T y = head_out_[i];
        const T gy = static_cast<T>(grad_output.values[i]);
        g[i] = (i % 3 == 2) ? (y > T(0) ? gy : T(0)) : gy * (T(1) - y * y);
    }
    g = head2_.backward(g);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= nn::silu_grad(head1_pre_[i]);
    const std::vector<T> dtm = head1_.backward(g);

    std::vector<T> dpooled(static_cast<std::size_t>(tp) * d, T(0));
    for (int o = 0; o < lf; ++o)
        for (int i = 0; i < tp; ++i) {
            const T wt = static_cast<T>(temporal_[static_cast<std::size_t>(o) * tp + i]);
            for (int c = 0; c < d; ++c) dpooled[static_cast<std::size_t>(i) * d + c] += wt * dtm[static_cast<std::size_t>(o) * d + c];
        }
    std::vector<T> dx(static_cast<std::size_t>(tp) * fp * d);
    for (int t = 0; t < tp; ++t)
        for (int f = 0; f < fp; ++f)
            for (int c = 0; c < d; ++c)
                dx[(static_cast<std::size_t>(t) * fp + f) * d + c] = dpooled[static_cast<std::size_t>(t) * d + c] / T(fp);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dx = it->backward(dx);
    const std::vector<T> drows = proj_.backward(dx);

    const int c_enc = cfg_.encoder_channels[5];
    std::vector<T> denc(drows.size());
    for (int c = 0; c < c_enc; ++c)
        for (int p = 0; p < tp * fp; ++p) denc[static_cast<std::size_t>(c) * tp * fp + p] = drows[static_cast<std::size_t>(p) * c_enc + c];
    encode_backward(std::move(denc));
}

template <typename T>
std::vector<nn::ChannelNorm<T>*> SeldModel<T>::norms() {
    std::vector<nn::ChannelNorm<T>*> out;
    for (EncoderBlock& b : encoder_) {
        out.push_back(&b.norm1);
        out.push_back(&b.norm2);
    }
    if (cfg_.block.asymmetric_conv) {
        for (auto& blk : blocks_) {
            out.push_back(&blk.asym().time_norm());
            out.push_back(&blk.asym().freq_norm());
        }
    }
    return out;
}

template <typename T>
void SeldModel<T>::calibrate(const std::vector<FeatureTensor>& inputs) {
    if (inputs.empty()) throw EmptyInputError("calibration needs at least one input");
    const auto ns = norms();
    for (auto* n : ns) n->begin_calibration();
    for (const FeatureTensor& f : inputs) forward(f);
    for (auto* n : ns) n->end_calibration();
}

template <typename T>
nn::ParamList<T> SeldModel<T>::params() {
    nn::ParamList<T> out;
    for (EncoderBlock& b : encoder_) {
        b.conv1.collect(out);
        b.norm1.collect(out);
        b.conv2.collect(out);
        b.norm2.collect(out);
    }
    proj_.collect(out);
    for (auto& blk : blocks_) blk.collect(out);
    head1_.collect(out);
    head2_.collect(out);
    return out;
}

template <typename T>
nn::ParamList<T> SeldModel<T>::trainable_params() {
    nn::ParamList<T> out;
    for (nn::Param<T>* p : params())
        if (p->trainable) out.push_back(p);
    return out;
}

template <typename T>
void SeldModel<T>::save(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    binary::put_u32(out, kCheckpointVersion);
    const std::string text = cfg_.to_text();
    binary::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto ps = params();
    binary::put_u32(out, static_cast<std::uint32_t>(ps.size()));
    for (const nn::Param<T>* p : ps) {
        binary::put_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        binary::put_u32(out, static_cast<std::uint32_t>(p->shape.size()));
        for (int s : p->shape) binary::put_u32(out, static_cast<std::uint32_t>(s));
        for (T v : p->value) binary::put_f32(out, static_cast<float>(v));
    }
    if (!out) throw InputError("failed writing checkpoint " + path.string());
}

namespace {

std::string read_checkpoint_header(std::istream& in, const std::filesystem::path& path) {
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic)) {
        throw FormatError(path.string() + ": not a checkpoint");
    }
    if (binary::get_u32(in) != kCheckpointVersion) throw FormatError(path.string() + ": unsupported checkpoint version");
    const std::uint32_t len = binary::get_u32(in);
    if (len > (1u << 20)) throw FormatError(path.string() + ": config block too large");
    return binary::get_bytes(in, len);
}

}  // namespace

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint " + path.string());
    return ModelConfig::from_key_values(parse_key_values(read_checkpoint_header(in, path)));
}

template <typename T>
void SeldModel<T>::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint " + path.string());
    const ModelConfig stored = ModelConfig::from_key_values(parse_key_values(read_checkpoint_header(in, path)));
    if (stored.to_text() != cfg_.to_text()) throw FormatError(path.string() + ": checkpoint config differs from model");
    std::map<std::string, nn::Param<T>*> by_name;
    for (nn::Param<T>* p : params()) by_name[p->name] = p;
    const std::uint32_t count = binary::get_u32(in);
    if (count != by_name.size()) throw FormatError(path.string() + ": tensor count mismatch");
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t name_len = binary::get_u32(in);
        if (name_len > 4096) throw FormatError(path.string() + ": tensor name too long");
        const std::string name = binary::get_bytes(in, name_len);
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError(path.string() + ": unexpected tensor " + name);
        nn::Param<T>& p = *it->second;
        const std::uint32_t ndim = binary::get_u32(in);
        if (ndim != p.shape.size()) throw FormatError(path.string() + ": rank mismatch for " + name);
        for (std::uint32_t i = 0; i < ndim; ++i) {
            if (binary::get_u32(in) != static_cast<std::uint32_t>(p.shape[i])) {
                throw FormatError(path.string() + ": shape mismatch for " + name);
            }
        }
        for (T& v : p.value) v = static_cast<T>(binary::get_f32(in));
    }
}

template class SeldModel<float>;
template class SeldModel<double>;

}  // namespace seld
