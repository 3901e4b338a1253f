#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tcmt/multitask_head.hpp"
#include "tcmt/tensor.hpp"

namespace tcmt {

/// Unreadable, missing or malformed input files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  Tensor image;                    // [1, side, side], zero mean / unit variance
  std::vector<double> landmarks;   // M values in [0,1]
  std::vector<double> attributes;  // T values in {0,1}
  std::vector<double> mask;        // T values in {0,1}; 0 = label unknown
};

struct Dataset {
  TaskLayout layout;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  /// Dataset holding the samples at `indices`, in that order.
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

// ---- PGM (binary P5, 8-bit) ----

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  bool operator==(const GrayImage&) const = default;
};

GrayImage read_pgm(const std::filesystem::path& path);
/// Reads only the header; returns (width, height).
std::pair<std::size_t, std::size_t> read_pgm_size(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Per-image standardization to zero mean and unit variance; constant images map to zeros.
Tensor normalize_image(const GrayImage& image);

/// Reads a P5 file of exactly side x side pixels and normalizes it.
Tensor decode_image(const std::filesystem::path& path, std::size_t side = 60);

// ---- Manifest ----

/**
 * CSV manifest. First line:
 *   #M=<int>,T=<int>,attrs=<name:group;...>[,eyes=<left>:<right>]
 * then one row per image:  path,y1..yM,a1..aT  with a_t = -1 for a missing label.
 * Relative image paths resolve against the manifest's directory.
 */
struct ManifestRecord {
  std::filesystem::path image_path;
  std::vector<double> landmarks;
  std::vector<double> attributes;  // -1 = missing
  std::size_t line = 0;
};

struct Manifest {
  TaskLayout layout;
  std::vector<ManifestRecord> records;

  std::size_t size() const { return records.size(); }
  /// Decodes one record's image on demand.
  Sample load(std::size_t index, std::size_t side = 60) const;
  Dataset load_all(std::size_t side = 60) const;
};

Manifest load_manifest(const std::filesystem::path& path);
std::string manifest_header(const TaskLayout& layout);
/// Writes a manifest; image paths are written as given.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Seeded shuffle into disjoint (train, validation) sets; validation gets round(fraction·n) samples.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double validation_fraction, std::uint64_t seed);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace tcmt
