#pragma once

// Synthetic paired static/event data. Each sample is one scene instance
// (a moving parametric shape); the static sequence is the HSV value channel
// of its first rendered frame duplicated into two channels and across time,
// the event sequence is ON/OFF contrast-threshold events of the motion.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmkt/frame_seq.hpp"

namespace tmkt::data {

enum class ShapeFamily { Square, Circle, Triangle, Cross, Bar };
inline constexpr int kShapeFamilies = 5;

struct GeneratorParams {
  int classes = 5;
  int per_class = 40;
  int height = 24;
  int width = 24;
  int timesteps = 8;
  std::uint64_t seed = 0;
  double contrast_threshold = 0.1;
  double max_event_density = 0.2;
  double test_fraction = 0.25;
  double min_speed = 0.6;  // pixels per step
  double max_speed = 1.4;
  int supersample = 4;

  void validate() const;
};

struct Scene {
  ShapeFamily family = ShapeFamily::Square;
  double orientation = 0.0;  // radians
  double size = 6.0;         // half-extent in pixels
  double cx = 12.0, cy = 12.0;
  double vx = 0.0, vy = 0.0;  // pixels per step
  double fg[3] = {1.0, 1.0, 1.0};
  double bg[3] = {0.0, 0.0, 0.0};
};

/// H x W x 3 RGB image in [0,1].
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;
};

ShapeFamily family_of_class(int label);
std::string class_name(int label);

Scene random_scene(const GeneratorParams& params, int label, std::uint64_t seed);

/// Renders the scene at time step t (supersampled coverage).
RgbImage render_rgb(const Scene& scene, int height, int width, double t, int supersample = 4);

/// Per-pixel brightness used by the event simulator (HSV value).
std::vector<float> render_intensity(const Scene& scene, int height, int width, double t, int supersample = 4);

/// Two-channel ON/OFF event frames for steps t = 1..T against the rendering at t-1.
FrameSeq simulate_events(const Scene& scene, const GeneratorParams& params, int label);

/// HSV value channel, duplicated to 2 channels and repeated over T steps.
/// Out-of-range inputs are clamped to [0,1] with a warning on stderr.
FrameSeq encode_static(const RgbImage& image, int timesteps, int label);

/// Static/event pair for one scene instance, seeded from (params.seed, label, index).
std::pair<FrameSeq, FrameSeq> generate_pair(const GeneratorParams& params, int label, int index);

double event_density(const FrameSeq& seq);

struct SampleEntry {
  std::string id;
  int label = 0;
  std::string static_path;  // relative to the manifest directory
  std::string event_path;
  SeqShape shape;
  std::string split;  // "train" or "test"
};

struct DatasetManifest {
  int version = 1;
  std::vector<std::string> class_names;
  std::vector<SampleEntry> samples;
  GeneratorParams generator;
  std::filesystem::path root;  // directory holding manifest.json; not serialized
};

inline constexpr const char* kManifestName = "manifest.json";

/// Writes static/, event/ and manifest.json under out_dir.
DatasetManifest gen_paired_dataset(const GeneratorParams& params, const std::filesystem::path& out_dir);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Accepts either the manifest file or its directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

struct PairedSample {
  std::string id;
  FrameSeq static_seq;
  FrameSeq event_seq;
  int label() const { return event_seq.label; }
};

/// Loads and cross-checks every pair of the split ("" for all).
std::vector<PairedSample> load_pairs(const DatasetManifest& manifest, const std::string& split);

}  // namespace tmkt::data

namespace tmkt::io {

inline constexpr char kSequenceMagic[4] = {'T', 'M', 'K', 'T'};
inline constexpr std::uint16_t kSequenceVersion = 1;

/// "TMKT" | u16 version | u16 rank | u32 dims[rank] | f32 payload, all little-endian.
std::vector<unsigned char> encode_sequence(const FrameSeq& seq);
FrameSeq decode_sequence(std::span<const unsigned char> bytes, Modality modality, int label);

void save_sequence(const std::filesystem::path& path, const FrameSeq& seq);
FrameSeq load_sequence(const std::filesystem::path& path, Modality modality, int label);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace tmkt::io
