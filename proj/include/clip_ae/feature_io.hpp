#pragma once

#include "clip_ae/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace clip_ae {

enum class Modality { audio = 0, cbp = 1, vlp = 2 };

inline constexpr std::array<Modality, 3> kModalities{Modality::audio, Modality::cbp, Modality::vlp};

std::string_view to_string(Modality m);

/// One modality of one video. Rows are segments (time), columns are feature dims.
struct FeatureSequence {
  std::string video_id;
  Modality modality = Modality::cbp;
  Matrix data;
  double segment_duration_s = 1.0;

  Index length() const { return data.rows(); }
  Index dim() const { return data.cols(); }

  /// Throws DimensionZero / NonFiniteValue / InvalidArgument.
  void validate() const;
};

struct GroundTruthSegment {
  std::string video_id;
  int class_index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct ManifestEntry {
  std::string video_id;
  std::array<std::filesystem::path, 3> feature_paths;  // indexed by Modality
  double segment_duration_s = 1.0;
  std::optional<std::vector<GroundTruthSegment>> ground_truth;
};

struct DatasetManifest {
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
};

/// The three aligned modalities of a video, segment-major.
struct VideoFeatures {
  std::string video_id;
  Matrix audio;
  Matrix cbp;
  Matrix vlp;
  double segment_duration_s = 1.0;

  Index length() const { return cbp.rows(); }
  const Matrix& get(Modality m) const;
  Matrix& get(Modality m);
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<VideoFeatures> videos;  // same order as manifest.entries

  int num_classes() const { return manifest.num_classes; }
  std::vector<GroundTruthSegment> ground_truth() const;
  bool has_ground_truth() const;
};

// On-disk feature file:
//   "CAFE" | u32 version (=1) | u32 T | u32 d | T*d float32, all little-endian, row-major.
inline constexpr std::array<char, 4> kFeatureMagic{'C', 'A', 'F', 'E'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

FeatureSequence read_feature_file(const std::filesystem::path& path);
void write_feature_file(const FeatureSequence& seq, const std::filesystem::path& path);

/// Parses and validates a manifest plus every feature file it references.
/// Relative feature paths resolve against the manifest's directory.
Dataset load_manifest(const std::filesystem::path& path);

/// Writes `dataset.manifest` as JSON. Feature paths are written as given.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SynthOptions {
  std::uint64_t seed = 1;
  int num_videos = 30;
  int num_classes = 3;
  int frames = 40;
  int dim = 16;
  double noise_std = 1.0;           // within-class latent noise
  double prototype_separation = 6.0;  // pairwise prototype distance in noise-std units
  double view_noise_std = 0.5;
  double segment_duration_s = 1.0;
};

/// Generates the synthetic dataset in memory. Manifest paths are of the form
/// "features/<id>_<modality>.cafe".
Dataset generate_synthetic(const SynthOptions& options);

/// Generates and writes the dataset (manifest.json + features/) under `out_dir`
/// and returns it as loaded back from disk.
Dataset synth_dataset(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace clip_ae
