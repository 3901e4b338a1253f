#include "tcmt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "tcmt/kv_text.hpp"

namespace fs = std::filesystem;

namespace tcmt {

namespace {

double row_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> parse_numbers(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(parse_double(tok, key));
  return out;
}

std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
  return s;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

double SynthSpec::attribute_noise_of(std::size_t t) const {
  const double s = attributes.at(t).noise;
  return s < 0.0 ? attribute_noise : s;
}

TaskLayout SynthSpec::layout() const {
  TaskLayout l;
  l.landmark_count = landmark_count();
  for (const auto& a : attributes) {
    l.attribute_names.push_back(a.name);
    l.attribute_groups.push_back(a.group);
  }
  l.left_eye = left_eye;
  l.right_eye = right_eye;
  return l;
}

void SynthSpec::validate() const {
  if (latent_dim == 0) throw ConfigError("synthetic spec: latent_dim must be positive");
  if (image_side < 4) throw ConfigError("synthetic spec: image_side must be at least 4");
  const std::size_t M = landmark_count();
  if (M == 0 || M % 2) throw ConfigError("synthetic spec: points must list x,y pairs");
  for (double v : template_points)
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("synthetic spec: template point outside [0,1]");
  if (landmark_map.rows() != M || landmark_map.cols() != latent_dim) {
    throw ConfigError("synthetic spec: landmark_map must be " + std::to_string(M) + "x" +
                      std::to_string(latent_dim));
  }
  if (!landmark_map.all_finite()) throw ConfigError("synthetic spec: landmark_map is not finite");
  for (const auto& a : attributes) {
    if (a.dependency.size() != latent_dim) {
      throw ConfigError("synthetic spec: attribute '" + a.name + "' needs " + std::to_string(latent_dim) +
                        " dependency weights");
    }
    const double n = row_norm(a.dependency);
    if (n != 0.0 && std::abs(n - 1.0) > 1e-9) {
      throw ConfigError("synthetic spec: dependency row of '" + a.name + "' is not normalized (norm " +
                        format_double(n) + ")");
    }
    if (!std::isfinite(a.threshold)) throw ConfigError("synthetic spec: threshold of '" + a.name + "'");
  }
  if (!(landmark_noise >= 0.0) || !(attribute_noise >= 0.0) || !(image_noise >= 0.0)) {
    throw ConfigError("synthetic spec: noise scales must be non-negative");
  }
  if (!(blob_sigma > 0.0)) throw ConfigError("synthetic spec: blob_sigma must be positive");
  for (std::size_t p : rendered_points)
    if (p >= M / 2) throw ConfigError("synthetic spec: rendered point index out of range");
  try {
    layout().validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
}

void normalize_dependencies(SynthSpec& spec) {
  for (auto& a : spec.attributes) {
    const double n = row_norm(a.dependency);
    if (n > 0.0)
      for (double& w : a.dependency) w /= n;
  }
}

std::string SynthSpec::to_text() const {
  KeyValues kv;
  kv.set("latent_dim", std::to_string(latent_dim));
  kv.set("samples", std::to_string(samples));
  kv.set("image_side", std::to_string(image_side));
  kv.set("seed", std::to_string(seed));
  std::string pts;
  for (std::size_t p = 0; p < template_points.size() / 2; ++p) {
    pts += (p ? ";" : "") + format_double(template_points[2 * p]) + " " + format_double(template_points[2 * p + 1]);
  }
  kv.set("points", pts);
  std::string map;
  for (std::size_t r = 0; r < landmark_map.rows(); ++r) {
    std::vector<double> row(landmark_map.cols());
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = landmark_map(r, c);
    map += (r ? ";" : "") + join_numbers(row);
  }
  kv.set("landmark_map", map);
  kv.set("landmark_noise", format_double(landmark_noise));
  kv.set("attribute_noise", format_double(attribute_noise));
  kv.set("image_noise", format_double(image_noise));
  kv.set("blob_sigma", format_double(blob_sigma));
  kv.set("blob_amplitude", format_double(blob_amplitude));
  kv.set("background", format_double(background));
  kv.set("eyes", std::to_string(left_eye) + ":" + std::to_string(right_eye));
  if (!rendered_points.empty()) {
    std::string r;
    for (std::size_t i = 0; i < rendered_points.size(); ++i) r += (i ? " " : "") + std::to_string(rendered_points[i]);
    kv.set("rendered_points", r);
  }
  for (const auto& a : attributes) {
    kv.set("attribute." + a.name, a.group + "|" + format_double(a.threshold) + "|" + format_double(a.noise) + "|" +
                                        join_numbers(a.dependency));
  }
  return kv.to_text();
}

SynthSpec parse_synth_spec(const std::string& text) {
  const KeyValues kv = KeyValues::parse(text, "synthetic spec");
  SynthSpec s;
  std::vector<std::vector<double>> map_rows;
  for (const auto& [key, value] : kv.entries) {
    if (key == "latent_dim") {
      s.latent_dim = parse_size(value, key);
    } else if (key == "samples") {
      s.samples = parse_size(value, key);
    } else if (key == "image_side") {
      s.image_side = parse_size(value, key);
    } else if (key == "seed") {
      s.seed = static_cast<std::uint64_t>(parse_size(value, key));
    } else if (key == "points") {
      for (const auto& p : split(value, ';')) {
        const auto xy = parse_numbers(p, key);
        if (xy.size() != 2) throw ConfigError("synthetic spec: each point needs exactly 2 coordinates");
        s.template_points.insert(s.template_points.end(), xy.begin(), xy.end());
      }
    } else if (key == "landmark_map") {
      for (const auto& r : split(value, ';')) map_rows.push_back(parse_numbers(r, key));
    } else if (key == "landmark_noise") {
      s.landmark_noise = parse_double(value, key);
    } else if (key == "attribute_noise") {
      s.attribute_noise = parse_double(value, key);
    } else if (key == "image_noise") {
      s.image_noise = parse_double(value, key);
    } else if (key == "blob_sigma") {
      s.blob_sigma = parse_double(value, key);
    } else if (key == "blob_amplitude") {
      s.blob_amplitude = parse_double(value, key);
    } else if (key == "background") {
      s.background = parse_double(value, key);
    } else if (key == "eyes") {
      const auto parts = split(value, ':');
      if (parts.size() != 2) throw ConfigError("synthetic spec: eyes must be left:right");
      s.left_eye = parse_size(parts[0], key);
      s.right_eye = parse_size(parts[1], key);
    } else if (key == "rendered_points") {
      for (double v : parse_numbers(value, key)) s.rendered_points.push_back(static_cast<std::size_t>(v));
    } else if (key.rfind("attribute.", 0) == 0) {
      const auto parts = split(value, '|');
      if (parts.size() != 4) throw ConfigError("synthetic spec: " + key + " must be group|threshold|noise|weights");
      SynthAttribute a;
      a.name = key.substr(10);
      a.group = trim(parts[0]);
      a.threshold = parse_double(trim(parts[1]), key);
      a.noise = parse_double(trim(parts[2]), key);
      a.dependency = parse_numbers(parts[3], key);
      s.attributes.push_back(std::move(a));
    } else {
      throw ConfigError("synthetic spec: unknown key '" + key + "'");
    }
  }
  const std::size_t cols = map_rows.empty() ? s.latent_dim : map_rows.front().size();
  s.landmark_map = Matrix(map_rows.size(), cols);
  for (std::size_t r = 0; r < map_rows.size(); ++r) {
    if (map_rows[r].size() != cols) throw ConfigError("synthetic spec: landmark_map rows differ in length");
    for (std::size_t c = 0; c < cols; ++c) s.landmark_map(r, c) = map_rows[r][c];
  }
  s.validate();
  return s;
}

SynthSpec load_synth_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synthetic spec " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_synth_spec(ss.str());
}

SyntheticData generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const std::size_t N = spec.samples, L = spec.latent_dim, M = spec.landmark_count(), T = spec.attributes.size();
  const std::size_t side = spec.image_side, P = M / 2;
  std::vector<std::size_t> drawn = spec.rendered_points;
  if (drawn.empty())
    for (std::size_t p = 0; p < P; ++p) drawn.push_back(p);

  SyntheticData out;
  out.dataset.layout = spec.layout();
  out.dataset.samples.reserve(N);
  out.images.reserve(N);
  out.latents = Matrix(N, L);
  out.clean_landmarks.reserve(N);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double inv_two_var = 1.0 / (2.0 * spec.blob_sigma * spec.blob_sigma);
  std::vector<double> field(side * side);

  for (std::size_t i = 0; i < N; ++i) {
    std::vector<double> z(L);
    for (auto& v : z) v = normal(rng);
    for (std::size_t k = 0; k < L; ++k) out.latents(i, k) = z[k];

    std::vector<double> clean(M);
    for (std::size_t m = 0; m < M; ++m) {
      double v = spec.template_points[m];
      for (std::size_t k = 0; k < L; ++k) v += spec.landmark_map(m, k) * z[k];
      clean[m] = std::clamp(v, 0.0, 1.0);
    }
    Sample s;
    s.landmarks.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
      s.landmarks[m] = std::clamp(clean[m] + spec.landmark_noise * normal(rng), 0.0, 1.0);
    }
    s.attributes.resize(T);
    s.mask.assign(T, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      const auto& a = spec.attributes[t];
      double u = 0.0;
      for (std::size_t k = 0; k < L; ++k) u += a.dependency[k] * z[k];
      u += spec.attribute_noise_of(t) * normal(rng);
      s.attributes[t] = u > a.threshold ? 1.0 : 0.0;
    }

    std::fill(field.begin(), field.end(), spec.background);
    for (std::size_t p : drawn) {
      // Pixel (r, c) has its centre at ((c + 0.5)/side, (r + 0.5)/side).
      const double cx = clean[2 * p] * static_cast<double>(side) - 0.5;
      const double cy = clean[2 * p + 1] * static_cast<double>(side) - 0.5;
      for (std::size_t r = 0; r < side; ++r) {
        const double dy = static_cast<double>(r) - cy;
        for (std::size_t c = 0; c < side; ++c) {
          const double dx = static_cast<double>(c) - cx;
          field[r * side + c] += spec.blob_amplitude * std::exp(-(dx * dx + dy * dy) * inv_two_var);
        }
      }
    }
    GrayImage img{side, side, std::vector<std::uint8_t>(side * side)};
    for (std::size_t k = 0; k < side * side; ++k) {
      const double v = field[k] + (spec.image_noise > 0.0 ? spec.image_noise * normal(rng) : 0.0);
      img.pixels[k] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    s.image = normalize_image(img);
    out.dataset.samples.push_back(std::move(s));
    out.images.push_back(std::move(img));
    out.clean_landmarks.push_back(std::move(clean));
  }
  return out;
}

void write_synthetic(const SyntheticData& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  Manifest m;
  m.layout = data.dataset.layout;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.pgm", i);
    write_pgm(dir / name, data.images[i]);
    const auto& s = data.dataset.samples[i];
    ManifestRecord r;
    r.image_path = name;
    r.landmarks = s.landmarks;
    for (std::size_t t = 0; t < s.attributes.size(); ++t) r.attributes.push_back(s.mask[t] > 0 ? s.attributes[t] : -1.0);
    m.records.push_back(std::move(r));
  }
  write_manifest(dir / "manifest.csv", m);
}

double analytic_correlation(const SynthSpec& spec, std::size_t attribute, std::size_t coordinate) {
  const auto& a = spec.attributes.at(attribute);
  if (coordinate >= spec.landmark_count()) throw DimensionError("analytic_correlation: coordinate out of range");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < spec.latent_dim; ++k) {
    const double b = spec.landmark_map(coordinate, k);
    ab += a.dependency[k] * b;
    aa += a.dependency[k] * a.dependency[k];
    bb += b * b;
  }
  const double sigma_t = spec.attribute_noise_of(attribute);
  const double s = std::sqrt(aa + sigma_t * sigma_t);
  const double coord_sd = std::sqrt(bb + spec.landmark_noise * spec.landmark_noise);
  if (s == 0.0 || coord_sd == 0.0) return 0.0;
  const double c = a.threshold / s;
  const double p = 1.0 - normal_cdf(c);
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return ab * normal_pdf(c) / (s * std::sqrt(p * (1.0 - p)) * coord_sd);
}

namespace {

// Base face: left eye, right eye, nose tip, left and right mouth corner.
constexpr double kFace[10] = {0.30, 0.35, 0.70, 0.35, 0.50, 0.55, 0.35, 0.75, 0.65, 0.75};
constexpr double kScaleCentre[2] = {0.50, 0.55};

// Displacement of base coordinate m per unit of each latent.
Matrix base_map() {
  const double local = 0.035, pose = 0.015, scale = 0.06;
  Matrix b(10, 5);
  // eyes move apart and down
  b(0, 0) = -local;
  b(1, 0) = 0.5 * local;
  b(2, 0) = local;
  b(3, 0) = 0.5 * local;
  // nose shifts right and down
  b(4, 1) = local;
  b(5, 1) = 0.6 * local;
  // mouth corners spread and rise
  b(6, 2) = -local;
  b(7, 2) = -0.6 * local;
  b(8, 2) = local;
  b(9, 2) = -0.6 * local;
  // horizontal pose, stronger at the nose
  for (std::size_t p = 0; p < 5; ++p) b(2 * p, 3) = pose;
  b(4, 3) += pose;
  // global scale about the face centre
  for (std::size_t p = 0; p < 5; ++p) {
    b(2 * p, 4) = scale * (kFace[2 * p] - kScaleCentre[0]);
    b(2 * p + 1, 4) = scale * (kFace[2 * p + 1] - kScaleCentre[1]);
  }
  return b;
}

std::vector<double> unit(std::size_t dim, std::size_t k) {
  std::vector<double> v(dim, 0.0);
  v[k] = 1.0;
  return v;
}

}  // namespace

SynthSpec planted_face_spec(std::size_t samples, std::uint64_t seed) {
  SynthSpec s;
  s.latent_dim = 5;
  s.samples = samples;
  s.seed = seed;
  s.template_points.assign(std::begin(kFace), std::end(kFace));
  s.landmark_map = base_map();
  s.landmark_noise = 0.004;
  s.attribute_noise = 0.1;
  s.image_noise = 6.0;
  const char* groups[5] = {"eyes", "nose", "mouth", "pose", "global"};
  const char* names[5][2] = {{"eyes_wide", "eyes_low"},
                             {"nose_right", "nose_long"},
                             {"smiling", "mouth_wide"},
                             {"facing_right", "turned"},
                             {"large_face", "close_up"}};
  for (std::size_t k = 0; k < 5; ++k) {
    s.attributes.push_back({names[k][0], groups[k], unit(5, k), 0.0, 0.1});
    s.attributes.push_back({names[k][1], groups[k], unit(5, k), 0.0, 0.5});
  }
  s.attributes.push_back({"coin_a", "random", std::vector<double>(5, 0.0), 0.0, 1.0});
  s.attributes.push_back({"coin_b", "random", std::vector<double>(5, 0.0), 0.0, 1.0});
  return s;
}

SynthSpec dense_face_spec(std::size_t points, std::size_t samples, std::uint64_t seed) {
  if (points < 5) throw ConfigError("dense_face_spec: need at least 5 points");
  SynthSpec s;
  s.latent_dim = 5;
  s.samples = samples;
  s.seed = seed;
  s.landmark_noise = 0.004;
  s.image_noise = 6.0;
  const Matrix base = base_map();
  s.landmark_map = Matrix(2 * points, 5);
  // The five base points first, then rings of offsets around them in turn.
  const double ring[8][2] = {{0.04, 0.0}, {-0.04, 0.0}, {0.0, 0.04}, {0.0, -0.04},
                             {0.03, 0.03}, {-0.03, 0.03}, {0.03, -0.03}, {-0.03, -0.03}};
  for (std::size_t q = 0; q < points; ++q) {
    const std::size_t p = q % 5;
    const std::size_t r = q / 5;
    double x = kFace[2 * p], y = kFace[2 * p + 1];
    if (r > 0) {
      const auto& off = ring[(r - 1) % 8];
      const double grow = 1.0 + static_cast<double>((r - 1) / 8);
      x += grow * off[0];
      y += grow * off[1];
    }
    s.template_points.push_back(std::clamp(x, 0.02, 0.98));
    s.template_points.push_back(std::clamp(y, 0.02, 0.98));
    for (std::size_t k = 0; k < 5; ++k) {
      s.landmark_map(2 * q, k) = base(2 * p, k);
      s.landmark_map(2 * q + 1, k) = base(2 * p + 1, k);
    }
  }
  s.rendered_points = {0, 1, 2, 3, 4};
  return s;
}

}  // namespace tcmt
