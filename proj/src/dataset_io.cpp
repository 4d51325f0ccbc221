#include "seld/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "seld/binary_io.hpp"
#include "seld/error.hpp"
#include "seld/metrics.hpp"

namespace seld {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::ostream& out, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    out.write(b, 2);
}

}  // namespace

StereoClip read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
        throw FormatError(path.string() + ": not a RIFF/WAVE file");
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;
    bool have_fmt = false;
    for (std::size_t pos = 12; pos + 8 <= n;) {
        const std::uint32_t len = le32(p + pos + 4);
        const unsigned char* body = p + pos + 8;
        const std::size_t avail = std::min<std::size_t>(len, n - pos - 8);
        if (std::memcmp(p + pos, "fmt ", 4) == 0) {
            if (avail < 16) throw FormatError(path.string() + ": truncated fmt chunk");
            format = le16(body);
            channels = le16(body + 2);
            rate = le32(body + 4);
            bits = le16(body + 14);
            if (format == kFormatExtensible) {
                if (avail < 26) throw FormatError(path.string() + ": truncated extensible fmt chunk");
                format = le16(body + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(p + pos, "data", 4) == 0) {
            data = body;
            data_len = avail;
        }
        pos += 8 + static_cast<std::size_t>(len) + (len & 1u);
    }
    if (!have_fmt || data == nullptr) throw FormatError(path.string() + ": missing fmt or data chunk");
    if (channels == 0) throw FormatError(path.string() + ": zero channels");
    if (channels > 2) throw FormatError(path.string() + ": only mono or stereo input is supported");
    if (rate == 0) throw FormatError(path.string() + ": zero sample rate");
    const bool ok = (format == kFormatPcm && (bits == 16 || bits == 24)) || (format == kFormatFloat && bits == 32);
    if (!ok) throw FormatError(path.string() + ": unsupported codec (format " + std::to_string(format) + ", " +
                               std::to_string(bits) + " bits)");

    const std::size_t width = bits / 8;
    const std::size_t frames = data_len / (width * channels);
    StereoClip clip;
    clip.sample_rate_hz = static_cast<int>(rate);
    clip.left.resize(frames);
    clip.right.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const unsigned char* s = data + (i * channels + ch) * width;
            float v = 0.0f;
            if (bits == 16) {
                v = static_cast<float>(static_cast<std::int16_t>(le16(s))) / 32768.0f;
            } else if (bits == 24) {
                std::int32_t x = static_cast<std::int32_t>(s[0] | (s[1] << 8) | (s[2] << 16));
                if (x & 0x800000) x -= 0x1000000;
                v = static_cast<float>(x) / 8388608.0f;
            } else {
                v = std::bit_cast<float>(le32(s));
            }
            (ch == 0 ? clip.left : clip.right)[i] = v;
        }
    }
    if (channels == 1) clip.right = clip.left;
    return clip;
}

StereoClip load_wav(const std::filesystem::path& path) {
    StereoClip clip = read_wav(path);
    if (clip.size() == 0) throw EmptyInputError(path.string() + ": no samples");
    if (clip.sample_rate_hz != kSampleRate) clip = resample(clip, kSampleRate);
    return clip;
}

void write_wav(const std::filesystem::path& path, const StereoClip& clip, WavFormat format) {
    if (clip.left.size() != clip.right.size()) throw ShapeError("left and right channels differ in length");
    const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : format == WavFormat::pcm24 ? 24 : 32;
    const std::uint16_t tag = format == WavFormat::float32 ? kFormatFloat : kFormatPcm;
    const std::uint32_t block = 2u * bits / 8;
    const std::uint32_t data_len = static_cast<std::uint32_t>(clip.size() * block);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write("RIFF", 4);
    binary::put_u32(out, 36 + data_len);
    out.write("WAVEfmt ", 8);
    binary::put_u32(out, 16);
    put_u16(out, tag);
    put_u16(out, 2);
    binary::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
    binary::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * block);
    put_u16(out, static_cast<std::uint16_t>(block));
    put_u16(out, bits);
    out.write("data", 4);
    binary::put_u32(out, data_len);
    auto quantize = [](float v, double scale, double lo, double hi) {
        return static_cast<std::int32_t>(std::clamp(std::round(static_cast<double>(v) * scale), lo, hi));
    };
    for (std::size_t i = 0; i < clip.size(); ++i) {
        for (float v : {clip.left[i], clip.right[i]}) {
            if (format == WavFormat::float32) {
                binary::put_f32(out, v);
            } else if (format == WavFormat::pcm16) {
                put_u16(out, static_cast<std::uint16_t>(quantize(v, 32768.0, -32768.0, 32767.0)));
            } else {
                const std::int32_t x = quantize(v, 8388608.0, -8388608.0, 8388607.0);
                const char b[3] = {static_cast<char>(x & 0xFF), static_cast<char>((x >> 8) & 0xFF),
                                   static_cast<char>((x >> 16) & 0xFF)};
                out.write(b, 3);
            }
        }
    }
    if (!out) throw InputError("failed writing " + path.string());
}

std::vector<ClipRecord> segment(const StereoClip& audio_in, const EventList& labels, double seg_s,
                                const std::string& source_id) {
    const StereoClip audio = audio_in.sample_rate_hz == kSampleRate ? audio_in : resample(audio_in, kSampleRate);
    const int seg_frames = static_cast<int>(std::lround(seg_s * 10.0));
    if (seg_frames <= 0) throw InputError("segment length must be at least 100 ms");
    const std::size_t seg_samples = static_cast<std::size_t>(seg_frames) * kLabelHopSamples;

    std::size_t n_seg = (audio.size() + seg_samples - 1) / seg_samples;
    for (const Event& e : labels) {
        if (e.frame < 0) throw InputError("negative label frame");
        n_seg = std::max(n_seg, static_cast<std::size_t>(e.frame / seg_frames) + 1);
    }

    std::vector<ClipRecord> out(n_seg);
    for (std::size_t s = 0; s < n_seg; ++s) {
        ClipRecord& r = out[s];
        r.source_id = source_id + "#" + std::to_string(s);
        r.audio.sample_rate_hz = kSampleRate;
        r.audio.left.assign(seg_samples, 0.0f);
        r.audio.right.assign(seg_samples, 0.0f);
        const std::size_t begin = s * seg_samples;
        const std::size_t end = std::min(audio.size(), begin + seg_samples);
        if (begin < end) {
            std::copy(audio.left.begin() + begin, audio.left.begin() + end, r.audio.left.begin());
            std::copy(audio.right.begin() + begin, audio.right.begin() + end, r.audio.right.begin());
        }
    }
    for (const Event& e : labels) {
        Event local = e;
        local.frame = e.frame % seg_frames;
        out[e.frame / seg_frames].labels.push_back(local);
    }
    for (ClipRecord& r : out) sort_events(r.labels);
    return out;
}

StereoClip acs_audio(const StereoClip& clip) {
    StereoClip out = clip;
    std::swap(out.left, out.right);
    return out;
}

std::pair<double, double> pan_gains(double azimuth_deg) {
    const double folded = std::clamp(fold_frontback(azimuth_deg), -90.0, 90.0);
    const double phi = (folded + 90.0) / 180.0 * (std::numbers::pi / 2.0);
    return {std::sin(phi), std::cos(phi)};
}

ClipRecord synth_clip(std::uint64_t seed, int index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    ClipRecord rec;
    rec.source_id = "synth" + std::to_string(index);
    rec.audio.sample_rate_hz = kSampleRate;
    rec.audio.left.assign(kSegmentSamples, 0.0f);
    rec.audio.right.assign(kSegmentSamples, 0.0f);

    std::vector<int> classes(kClasses);
    for (int c = 0; c < kClasses; ++c) classes[c] = c;
    std::shuffle(classes.begin(), classes.end(), rng);
    const int n_events = 1 + static_cast<int>(rng() % 3);

    std::vector<double> left(kSegmentSamples, 0.0), right(kSegmentSamples, 0.0);
    for (int k = 0; k < n_events; ++k) {
        const int cls = classes[k];
        const double az = std::round(-90.0 + 180.0 * unit(rng));
        const double dist = 0.5 + 4.5 * unit(rng);
        const int dur = 10 + static_cast<int>(rng() % 21);  // 1-3 s
        const int onset = static_cast<int>(rng() % (kLabelFrames - dur + 1));
        const double freq = 300.0 + 250.0 * cls;
        const double amp = 0.25 / dist;
        const auto [gl, gr] = pan_gains(az);
        const double phase = 2.0 * std::numbers::pi * unit(rng);

        const std::size_t begin = static_cast<std::size_t>(onset) * kLabelHopSamples;
        const std::size_t end = static_cast<std::size_t>(onset + dur) * kLabelHopSamples;
        const std::size_t ramp = 240;  // 10 ms fades
        for (std::size_t i = begin; i < end; ++i) {
            double env = 1.0;
            if (i - begin < ramp) env = static_cast<double>(i - begin) / ramp;
            if (end - 1 - i < ramp) env = std::min(env, static_cast<double>(end - 1 - i) / ramp);
            const double t = static_cast<double>(i - begin) / kSampleRate;
            const double s = amp * env * std::sin(2.0 * std::numbers::pi * freq * t + phase);
            left[i] += gl * s;
            right[i] += gr * s;
        }
        for (int f = onset; f < onset + dur; ++f) {
            rec.labels.push_back(Event{f, cls, wrap_azimuth(az), dist, std::nullopt});
        }
    }
    for (std::size_t i = 0; i < left.size(); ++i) {
        rec.audio.left[i] = static_cast<float>(left[i]);
        rec.audio.right[i] = static_cast<float>(right[i]);
    }
    sort_events(rec.labels);
    return rec;
}

std::vector<ClipRecord> synth_dataset(int n_clips, std::uint64_t seed) {
    if (n_clips < 0) throw InputError("n_clips must be non-negative");
    std::vector<ClipRecord> out;
    out.reserve(n_clips);
    for (int i = 0; i < n_clips; ++i) out.push_back(synth_clip(seed, i));
    return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path, const std::filesystem::path& base_dir) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest " + path.string());
    std::vector<ManifestEntry> out;
    std::string line;
    auto resolve = [&](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        std::filesystem::path p(s);
        if (!s.empty() && p.is_relative()) p = base_dir / p;
        return s.empty() ? std::filesystem::path() : p;
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
        const auto comma = line.find(',');
        ManifestEntry e;
        e.audio = resolve(line.substr(0, comma));
        if (comma != std::string::npos) e.labels = resolve(line.substr(comma + 1));
        if (e.audio.empty()) throw FormatError("manifest " + path.string() + ": empty audio path");
        out.push_back(e);
    }
    return out;
}

}  // namespace seld
