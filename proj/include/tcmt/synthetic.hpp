#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcmt/dataset.hpp"
#include "tcmt/linalg.hpp"

namespace tcmt {

struct SynthAttribute {
  std::string name;
  std::string group;
  std::vector<double> dependency;  // latent_dim weights, unit norm or all zero
  double threshold = 0.0;
  double noise = -1.0;  // sd of the pre-threshold noise; negative = use SynthSpec::attribute_noise

  bool operator==(const SynthAttribute&) const = default;
};

/**
 * Generator for face-like data with known task structure. Each sample draws
 * z ~ N(0, I). Point coordinates are template + B z; the image is a sum of
 * Gaussian blobs at those points plus pixel noise. Attribute t is
 * 1[a_t·z + σ_t ξ > c_t].
 */
struct SynthSpec {
  std::size_t latent_dim = 5;
  std::size_t samples = 100;
  std::size_t image_side = 60;
  std::uint64_t seed = 1;
  std::vector<double> template_points;  // interleaved x,y in [0,1], M values
  Matrix landmark_map;                  // M x latent_dim
  std::vector<SynthAttribute> attributes;
  double landmark_noise = 0.0;   // label noise on coordinates
  double attribute_noise = 0.0;  // default σ_t
  double image_noise = 0.0;      // pixel noise sd, in grey levels
  double blob_sigma = 2.0;       // pixels
  double blob_amplitude = 160.0;
  double background = 48.0;
  std::size_t left_eye = 0;
  std::size_t right_eye = 1;
  std::vector<std::size_t> rendered_points;  // points drawn as blobs; empty = all

  std::size_t landmark_count() const { return template_points.size(); }
  double attribute_noise_of(std::size_t t) const;
  TaskLayout layout() const;
  /// Throws ConfigError on inconsistent sizes, non-unit dependency rows or negative noise.
  void validate() const;

  /// key=value text; parse_synth_spec inverts it.
  std::string to_text() const;

  bool operator==(const SynthSpec&) const = default;
};

SynthSpec parse_synth_spec(const std::string& text);
SynthSpec load_synth_spec(const std::filesystem::path& path);

/// Scales every nonzero dependency row to unit length.
void normalize_dependencies(SynthSpec& spec);

struct SyntheticData {
  Dataset dataset;
  std::vector<GrayImage> images;  // 8-bit renders; dataset images are their normalized form
  Matrix latents;                 // samples x latent_dim
  std::vector<std::vector<double>> clean_landmarks;  // noiseless coordinates per sample
};

SyntheticData generate_synthetic(const SynthSpec& spec);

/// Writes img_00000.pgm ... and manifest.csv into `dir` (created if needed).
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

/**
 * Population correlation between attribute t's label and landmark coordinate m,
 * ignoring the [0,1] clamp on coordinates:
 *   (a·b) φ(c/s) / (s · sqrt(p(1−p)) · sqrt(|b|² + σ_y²)),  s² = |a|² + σ_t²,  p = 1 − Φ(c/s)
 * where b is row m of the landmark map.
 */
double analytic_correlation(const SynthSpec& spec, std::size_t attribute, std::size_t coordinate);

/**
 * Five-point face (eyes, nose, mouth corners) driven by five latents: eye
 * spread, nose shift, mouth spread, horizontal pose and global scale. Two
 * attributes per latent in groups eyes/nose/mouth/pose/global plus two
 * fair-coin attributes in group "random".
 */
SynthSpec planted_face_spec(std::size_t samples, std::uint64_t seed);

/**
 * Dense variant: `points` landmarks placed on the same face, each moving with
 * the latents of its nearest sparse landmark. No attributes.
 */
SynthSpec dense_face_spec(std::size_t points, std::size_t samples, std::uint64_t seed);

}  // namespace tcmt
