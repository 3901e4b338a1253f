#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "support.hpp"
#include "tcmt/dataset.hpp"
#include "tcmt/kv_text.hpp"
#include "tcmt/synthetic.hpp"

using namespace tcmt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("tcmt_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

GrayImage random_image(std::size_t side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GrayImage g{side, side, std::vector<std::uint8_t>(side * side)};
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return g;
}

std::string rows(const std::string& image, std::size_t m, std::size_t t) {
  std::string r = image;
  for (std::size_t i = 0; i < m; ++i) r += ",0.5";
  for (std::size_t i = 0; i < t; ++i) r += i % 3 == 2 ? ",-1" : ",1";
  return r + "\n";
}

std::string attrs(std::size_t t) {
  std::string s;
  for (std::size_t i = 0; i < t; ++i) s += (i ? ";a" : "a") + std::to_string(i) + ":g" + std::to_string(i % 4);
  return s;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("PGM round trip is lossless") {
  TempDir d("pgm");
  for (std::size_t side : {1, 7, 60}) {
    const GrayImage g = random_image(side, side);
    write_pgm(d.path / "a.pgm", g);
    CHECK(read_pgm(d.path / "a.pgm") == g);
    CHECK(read_pgm_size(d.path / "a.pgm") == std::pair<std::size_t, std::size_t>{side, side});
  }
  write_text(d.path / "bad.pgm", "P2\n2 2\n255\n0 0 0 0\n");
  CHECK_THROWS_AS(read_pgm(d.path / "bad.pgm"), DataError);
  write_text(d.path / "short.pgm", "P5\n4 4\n255\nab");
  CHECK_THROWS_AS(read_pgm(d.path / "short.pgm"), DataError);
  CHECK_THROWS_AS(read_pgm(d.path / "missing.pgm"), DataError);
  write_pgm(d.path / "small.pgm", random_image(30, 1));
  CHECK_THROWS_AS(decode_image(d.path / "small.pgm"), DataError);
}

TEST_CASE("image normalization") {
  GrayImage checker{4, 4, {}};
  for (std::size_t i = 0; i < 16; ++i) checker.pixels.push_back(((i / 4 + i % 4) % 2) ? 255 : 0);
  const Tensor nc = normalize_image(checker);
  for (double v : nc.values()) CHECK(std::abs(std::abs(v) - 1.0) < 1e-15);

  const GrayImage flat{5, 5, std::vector<std::uint8_t>(25, 77)};
  const Tensor nf = normalize_image(flat);
  for (double v : nf.values()) CHECK(v == 0.0);

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Tensor t = normalize_image(random_image(60, seed));
    CHECK(t.shape() == Shape{1, 60, 60});
    const double n = static_cast<double>(t.size());
    const double mean = t.sum() / n;
    double var = 0.0;
    for (double v : t.values()) var += (v - mean) * (v - mean);
    var /= n;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("manifest loading") {
  TempDir d("manifest");
  write_pgm(d.path / "f.pgm", random_image(60, 3));
  const std::string header = "#M=10,T=22,attrs=" + attrs(22) + "\n";
  write_text(d.path / "ok.csv", header + rows("f.pgm", 10, 22) + rows("f.pgm", 10, 22));
  const Manifest m = load_manifest(d.path / "ok.csv");
  CHECK(m.size() == 2);
  CHECK(m.layout.attribute_count() == 22);
  CHECK(m.layout.landmark_count == 10);
  const Sample s = m.load(0);
  CHECK(s.image.shape() == Shape{1, 60, 60});
  CHECK(s.attributes[2] == 0.0);
  CHECK(s.mask[2] == 0.0);
  CHECK(s.mask[0] == 1.0);

  SUBCASE("short row names its line") {
    write_text(d.path / "short.csv", header + rows("f.pgm", 10, 22) + rows("f.pgm", 9, 22));
    try {
      load_manifest(d.path / "short.csv");
      FAIL("expected a parse error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
  }
  SUBCASE("missing image names the path") {
    write_text(d.path / "missing.csv", header + rows("nope.pgm", 10, 22));
    try {
      load_manifest(d.path / "missing.csv");
      FAIL("expected a missing-image error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("nope.pgm") != std::string::npos);
    }
  }
  SUBCASE("empty manifest") {
    write_text(d.path / "empty.csv", "");
    const Manifest e = load_manifest(d.path / "empty.csv");
    CHECK(e.size() == 0);
    CHECK(e.load_all().empty());
  }
  SUBCASE("header and value errors") {
    write_text(d.path / "h.csv", "#M=10,T=3,attrs=a:g;b:g\n");
    CHECK_THROWS_AS(load_manifest(d.path / "h.csv"), DataError);
    write_text(d.path / "v.csv", "#M=2,T=1,attrs=a:g\nf.pgm,0.5,1.5,1\n");
    CHECK_THROWS_AS(load_manifest(d.path / "v.csv"), DataError);
    write_text(d.path / "a.csv", "#M=2,T=1,attrs=a:g\nf.pgm,0.5,0.5,2\n");
    CHECK_THROWS_AS(load_manifest(d.path / "a.csv"), DataError);
  }
  SUBCASE("write and reload") {
    write_manifest(d.path / "copy.csv", m);
    const Manifest back = load_manifest(d.path / "copy.csv");
    CHECK(back.layout == m.layout);
    REQUIRE(back.size() == m.size());
    CHECK(back.records[1].attributes == m.records[1].attributes);
  }
}

TEST_CASE("train/validation split") {
  Dataset ds;
  ds.layout.landmark_count = 2;
  ds.layout.right_eye = 0;
  for (int i = 0; i < 1000; ++i) ds.samples.push_back({Tensor({1, 1, 1}, double(i)), {0.5, 0.5}, {}, {}});
  const auto [tr, va] = split(ds, 0.1, 3);
  CHECK(tr.size() == 900);
  CHECK(va.size() == 100);
  std::multiset<double> seen;
  for (const auto& s : tr.samples) seen.insert(s.image[0]);
  for (const auto& s : va.samples) seen.insert(s.image[0]);
  std::multiset<double> all;
  for (const auto& s : ds.samples) all.insert(s.image[0]);
  CHECK(seen == all);

  const auto [tr2, va2] = split(ds, 0.1, 3);
  for (std::size_t i = 0; i < va.size(); ++i) CHECK(va.samples[i].image == va2.samples[i].image);
  const auto [tr3, va3] = split(ds, 0.1, 4);
  bool differs = false;
  for (std::size_t i = 0; i < va.size(); ++i) differs |= !(va.samples[i].image == va3.samples[i].image);
  CHECK(differs);

  CHECK_THROWS_AS(split(ds, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split(ds, 0.6, 1), ConfigError);
  CHECK_THROWS_AS(split(ds.subset({0}), 0.5, 1), DataError);
}

TEST_CASE("synthetic generator is deterministic and well formed") {
  const SynthSpec spec = planted_face_spec(40, 11);
  spec.validate();
  const SyntheticData a = generate_synthetic(spec);
  const SyntheticData b = generate_synthetic(spec);
  CHECK(a.images == b.images);
  CHECK(a.latents == b.latents);
  CHECK(a.dataset.size() == 40);
  CHECK(a.dataset.layout.attribute_count() == 12);
  for (const auto& s : a.dataset.samples) {
    for (double y : s.landmarks) CHECK((y >= 0.0 && y <= 1.0));
    for (double l : s.attributes) CHECK((l == 0.0 || l == 1.0));
  }
  SynthSpec other = spec;
  other.seed = 12;
  CHECK_FALSE(generate_synthetic(other).images == a.images);
  CHECK(parse_synth_spec(spec.to_text()) == spec);

  TempDir d("synth");
  write_synthetic(a, d.path);
  const Manifest m = load_manifest(d.path / "manifest.csv");
  CHECK(m.size() == 40);
  const Dataset back = m.load_all(spec.image_side);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(back.samples[i].image == a.dataset.samples[i].image);
    CHECK(test::max_abs_diff(back.samples[i].landmarks, a.dataset.samples[i].landmarks) < 1e-15);
    CHECK(back.samples[i].attributes == a.dataset.samples[i].attributes);
  }
}

TEST_CASE("noiseless synthetic attributes are functions of the latents") {
  SynthSpec spec = planted_face_spec(300, 5);
  spec.landmark_noise = 0.0;
  spec.attribute_noise = 0.0;
  for (auto& a : spec.attributes) {
    a.noise = 0.0;
    a.threshold = 0.0;
  }
  const SyntheticData d = generate_synthetic(spec);
  for (std::size_t i = 0; i < 300; ++i) {
    for (std::size_t t = 0; t < spec.attributes.size(); ++t) {
      const auto& dep = spec.attributes[t].dependency;
      double s = 0.0;
      for (std::size_t k = 0; k < spec.latent_dim; ++k) s += dep[k] * d.latents(i, k);
      if (std::abs(s) < 1e-12) continue;
      CHECK(d.dataset.samples[i].attributes[t] == (s > 0.0 ? 1.0 : 0.0));
    }
    CHECK(test::max_abs_diff(d.dataset.samples[i].landmarks, d.clean_landmarks[i]) == 0.0);
  }
}

TEST_CASE("empirical attribute/landmark correlation matches the analytic value") {
  SynthSpec spec = planted_face_spec(10000, 21);
  spec.image_side = 8;  // pixels are irrelevant here
  spec.blob_sigma = 0.5;
  const SyntheticData d = generate_synthetic(spec);
  double strongest = 0.0;
  for (std::size_t t = 0; t < spec.attributes.size(); ++t) {
    for (std::size_t m = 0; m < spec.landmark_count(); ++m) {
      const double expect = analytic_correlation(spec, t, m);
      std::vector<double> lab, coord;
      for (const auto& s : d.dataset.samples) {
        lab.push_back(s.attributes[t]);
        coord.push_back(s.landmarks[m]);
      }
      const double got = pearson(lab, coord);
      CAPTURE(t);
      CAPTURE(m);
      CHECK(std::abs(got - expect) < 0.05);
      strongest = std::max(strongest, std::abs(expect));
    }
  }
  CHECK(strongest > 0.7);

  // A zero dependency row has zero correlation with every coordinate.
  const std::size_t random_attr = spec.attributes.size() - 1;
  for (std::size_t m = 0; m < spec.landmark_count(); ++m) CHECK(analytic_correlation(spec, random_attr, m) == 0.0);
}

TEST_CASE("synthetic spec validation") {
  SynthSpec spec = planted_face_spec(10, 1);
  spec.attributes[0].dependency[0] = 3.0;
  CHECK_THROWS(spec.validate());
  normalize_dependencies(spec);
  spec.validate();
  spec.image_noise = -1.0;
  CHECK_THROWS(spec.validate());
}
