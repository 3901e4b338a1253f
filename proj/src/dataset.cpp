#include "tcmt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "tcmt/kv_text.hpp"

namespace fs = std::filesystem;

namespace tcmt {

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.layout = layout;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(samples.at(i));
  return out;
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

struct PgmHeader {
  std::size_t width = 0, height = 0, maxval = 0;
};

PgmHeader read_header(std::istream& in, const fs::path& path) {
  if (next_token(in) != "P5") throw DataError(path.string() + ": not a binary PGM (missing P5 magic)");
  PgmHeader h;
  try {
    h.width = std::stoul(next_token(in));
    h.height = std::stoul(next_token(in));
    h.maxval = std::stoul(next_token(in));
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PGM header");
  }
  if (h.width == 0 || h.height == 0) throw DataError(path.string() + ": PGM has zero size");
  if (h.maxval == 0 || h.maxval > 255) throw DataError(path.string() + ": only 8-bit PGM is supported");
  return h;
}

}  // namespace

std::pair<std::size_t, std::size_t> read_pgm_size(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  const auto h = read_header(in, path);
  return {h.width, h.height};
}

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  const auto h = read_header(in, path);
  GrayImage img{h.width, h.height, std::vector<std::uint8_t>(h.width * h.height)};
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw DataError(path.string() + ": truncated PGM pixel data");
  }
  return img;
}

void write_pgm(const fs::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) throw DimensionError("write_pgm: pixel count mismatch");
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  write_file_atomic(path, out);
}

Tensor normalize_image(const GrayImage& image) {
  const std::size_t n = image.pixels.size();
  Tensor t({1, image.height, image.width});
  if (n == 0) return t;
  double mean = 0.0;
  for (auto p : image.pixels) mean += p;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (auto p : image.pixels) var += (p - mean) * (p - mean);
  var /= static_cast<double>(n);
  if (var <= 0.0) return t;  // constant image: all zeros
  const double inv_sd = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < n; ++i) t[i] = (image.pixels[i] - mean) * inv_sd;
  return t;
}

Tensor decode_image(const fs::path& path, std::size_t side) {
  const GrayImage img = read_pgm(path);
  if (img.width != side || img.height != side) {
    throw DataError(path.string() + ": image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                    ", expected " + std::to_string(side) + "x" + std::to_string(side));
  }
  return normalize_image(img);
}

// ---- Manifest ----

std::string manifest_header(const TaskLayout& layout) {
  return "#M=" + std::to_string(layout.landmark_count) + ",T=" + std::to_string(layout.attribute_count()) +
         ",attrs=" + layout.attribute_list() + ",eyes=" + std::to_string(layout.left_eye) + ":" +
         std::to_string(layout.right_eye);
}

namespace {

TaskLayout parse_header(const std::string& line, const fs::path& path) {
  if (line.empty() || line[0] != '#') throw DataError(path.string() + ":1: manifest header must start with '#M='");
  TaskLayout layout;
  std::size_t T = 0;
  bool have_m = false, have_t = false;
  for (const auto& field : split(line.substr(1), ',')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw DataError(path.string() + ":1: malformed header field '" + field + "'");
    const std::string key = trim(field.substr(0, eq)), value = trim(field.substr(eq + 1));
    try {
      if (key == "M") {
        layout.landmark_count = parse_size(value, key);
        have_m = true;
      } else if (key == "T") {
        T = parse_size(value, key);
        have_t = true;
      } else if (key == "attrs") {
        TaskLayout::parse_attribute_list(value, layout);
      } else if (key == "eyes") {
        const auto parts = split(value, ':');
        if (parts.size() != 2) throw ConfigError("eyes must be left:right");
        layout.left_eye = parse_size(parts[0], key);
        layout.right_eye = parse_size(parts[1], key);
      } else {
        throw ConfigError("unknown header field '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw DataError(path.string() + ":1: " + e.what());
    }
  }
  if (!have_m || !have_t) throw DataError(path.string() + ":1: header must declare M and T");
  if (layout.attribute_count() != T) {
    throw DataError(path.string() + ":1: header declares T=" + std::to_string(T) + " but lists " +
                    std::to_string(layout.attribute_count()) + " attributes");
  }
  try {
    layout.validate();
  } catch (const DimensionError& e) {
    throw DataError(path.string() + ":1: " + e.what());
  }
  return layout;
}

}  // namespace

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line) && trim(line).empty()) {
  }
  if (!in) return m;  // empty file: empty dataset
  m.layout = parse_header(trim(line), path);
  const std::size_t M = m.layout.landmark_count, T = m.layout.attribute_count();
  const fs::path base = path.parent_path();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto cols = split(t, ',');
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (cols.size() != 1 + M + T) {
      throw DataError(where + "expected " + std::to_string(1 + M + T) + " columns (path, " + std::to_string(M) +
                      " landmarks, " + std::to_string(T) + " attributes), got " + std::to_string(cols.size()));
    }
    ManifestRecord r;
    r.line = lineno;
    r.image_path = fs::path(trim(cols[0]));
    if (r.image_path.is_relative()) r.image_path = base / r.image_path;
    try {
      for (std::size_t i = 0; i < M; ++i) {
        const double y = parse_double(trim(cols[1 + i]), "landmark " + std::to_string(i + 1));
        if (!(y >= 0.0 && y <= 1.0)) throw ConfigError("landmark " + std::to_string(i + 1) + " outside [0,1]");
        r.landmarks.push_back(y);
      }
      for (std::size_t t2 = 0; t2 < T; ++t2) {
        const double a = parse_double(trim(cols[1 + M + t2]), "attribute " + std::to_string(t2 + 1));
        if (a != 0.0 && a != 1.0 && a != -1.0) {
          throw ConfigError("attribute " + std::to_string(t2 + 1) + " must be 0, 1 or -1");
        }
        r.attributes.push_back(a);
      }
    } catch (const ConfigError& e) {
      throw DataError(where + e.what());
    }
    if (!fs::exists(r.image_path)) throw DataError(where + "image not found: " + r.image_path.string());
    m.records.push_back(std::move(r));
  }
  return m;
}

Sample Manifest::load(std::size_t index, std::size_t side) const {
  const auto& r = records.at(index);
  Sample s;
  s.image = decode_image(r.image_path, side);
  s.landmarks = r.landmarks;
  for (double a : r.attributes) {
    s.attributes.push_back(a < 0.0 ? 0.0 : a);
    s.mask.push_back(a < 0.0 ? 0.0 : 1.0);
  }
  return s;
}

Dataset Manifest::load_all(std::size_t side) const {
  Dataset d;
  d.layout = layout;
  d.samples.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) d.samples.push_back(load(i, side));
  return d;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ostringstream os;
  os << manifest_header(manifest.layout) << '\n';
  for (const auto& r : manifest.records) {
    os << r.image_path.generic_string();
    for (double y : r.landmarks) os << ',' << format_double(y);
    for (double a : r.attributes) os << ',' << format_double(a);
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw ConfigError("validation fraction must be in (0, 0.5], got " + format_double(validation_fraction));
  }
  const std::size_t n = dataset.size();
  if (n < 2) throw DataError("cannot split a dataset with fewer than 2 samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {dataset.subset(train), dataset.subset(val)};
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace tcmt
