#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seld/audio_frontend.hpp"
#include "seld/maccdoa_codec.hpp"

namespace seld {

inline constexpr double kSegmentSeconds = 5.0;
inline constexpr int kSegmentSamples = 120000;
inline constexpr int kLabelHopSamples = 2400;  // 100 ms at 24 kHz

struct ClipRecord {
    StereoClip audio;
    EventList labels;
    std::string source_id;
};

enum class WavFormat { pcm16, pcm24, float32 };

// Decodes PCM 16/24-bit or float32 WAV at its native rate; mono is duplicated.
StereoClip read_wav(const std::filesystem::path& path);
// read_wav followed by resampling to 24 kHz.
StereoClip load_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const StereoClip& clip, WavFormat format = WavFormat::float32);

// Non-overlapping windows with the tail zero-padded. Labels are indexed on a
// 100 ms grid over the whole recording and re-indexed per segment.
std::vector<ClipRecord> segment(const StereoClip& audio, const EventList& labels, double seg_s = kSegmentSeconds,
                                const std::string& source_id = "");

StereoClip acs_audio(const StereoClip& clip);

// Constant-power pan gains (left, right); +90 deg is fully left.
std::pair<double, double> pan_gains(double azimuth_deg);

// Deterministic panned tone bursts with 1-3 events of distinct classes per clip.
std::vector<ClipRecord> synth_dataset(int n_clips, std::uint64_t seed);
ClipRecord synth_clip(std::uint64_t seed, int index);

struct ManifestEntry {
    std::filesystem::path audio;
    std::filesystem::path labels;  // empty when not given
};

// One "audio_path[,label_path]" per line; relative paths resolve against base_dir.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path, const std::filesystem::path& base_dir);

}  // namespace seld
