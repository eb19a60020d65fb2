#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dsvit/config.hpp"
#include "dsvit/dual_stream.hpp"
#include "dsvit/image_io.hpp"
#include "dsvit/motion.hpp"

namespace dsvit {

using LabelVector = std::array<int, 5>;

struct ManifestEntry {
  std::string id;     // zero-padded global index, e.g. "00042"
  std::string split;  // "train" or "val"
  LabelVector labels{};
  double m_max = 0.0;
};

struct DatasetManifest {
  std::string root;
  std::vector<ManifestEntry> entries;

  std::string rgb_path(const ManifestEntry& e) const;
  std::string motion_path(const ManifestEntry& e) const;
  std::string flow_path(const ManifestEntry& e) const;
  /// Entry indices of one split, in manifest order.
  std::vector<std::size_t> split_indices(const std::string& split) const;
};

/// One rendered sample before it touches disk.
struct SyntheticSample {
  RgbImage rgb;
  FlowField flow;  // float32-exact, as stored in the flow file
  MotionImage motion;
  LabelVector labels{};
};

/// Renders the sample for `sample_seed`: textured pipe background, one glyph
/// per positive class, and a flow made of a camera translation plus local
/// motion inside each glyph.
SyntheticSample synthesize_sample(const DataConfig& cfg, std::uint64_t sample_seed);

/// Label vector alone; Bernoulli per class, rejection-sampled to at most
/// cfg.max_glyphs positives. Consumes the sample generator first.
LabelVector sample_labels(const DataConfig& cfg, Rng& rng);

/// Writes train and val splits plus manifest.csv under `root`.
/// Sample i uses derive_seed(seed, i).
DatasetManifest generate_dataset(const DataConfig& cfg, const std::string& root, std::uint64_t seed);

void write_manifest(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& root);

/// Checks every entry's files exist and share the image size.
void validate_manifest(const DatasetManifest& manifest);

/// Images scaled to [0, 1] as 3×H×W tensors, labels as a length-5 tensor.
Sample load_pair(const DatasetManifest& manifest, std::size_t index);

struct LoadedSplit {
  std::vector<std::string> ids;
  std::vector<Sample> samples;
};

LoadedSplit load_split(const DatasetManifest& manifest, const std::string& split);

}  // namespace dsvit
