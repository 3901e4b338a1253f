#include "tcmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "tcmt/dataset.hpp"
#include "tcmt/kv_text.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace tcmt {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string layout_to_text(const TaskLayout& layout) {
  KeyValues kv;
  kv.set("landmark_count", std::to_string(layout.landmark_count));
  kv.set("attrs", layout.attribute_list());
  kv.set("eyes", std::to_string(layout.left_eye) + ":" + std::to_string(layout.right_eye));
  return kv.to_text();
}

TaskLayout parse_layout(const std::string& text) {
  const KeyValues kv = KeyValues::parse(text, "layout");
  TaskLayout l;
  for (const auto& [key, value] : kv.entries) {
    if (key == "landmark_count") {
      l.landmark_count = parse_size(value, key);
    } else if (key == "attrs") {
      TaskLayout::parse_attribute_list(value, l);
    } else if (key == "eyes") {
      const auto parts = split(value, ':');
      if (parts.size() != 2) throw ConfigError("layout: eyes must be left:right");
      l.left_eye = parse_size(parts[0], key);
      l.right_eye = parse_size(parts[1], key);
    } else {
      throw ConfigError("layout: unknown key '" + key + "'");
    }
  }
  l.validate();
  return l;
}

namespace {

class Writer {
 public:
  template <class T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(std::string_view s) { out_.append(s); }
  void text(std::string_view s) {
    pod<std::uint64_t>(s.size());
    bytes(s);
  }
  void array(const Shape& shape, std::span<const double> values) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) pod<std::uint64_t>(d);
    out_.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  }
  void tensor(const Tensor& t) { array(t.shape(), t.values()); }
  void matrix(const Matrix& m) { array({m.rows(), m.cols()}, m.values()); }
  void vector(const std::vector<double>& v) { array({v.size()}, v); }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text() { return std::string(bytes(pod<std::uint64_t>())); }
  Tensor tensor() {
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) fail("array rank " + std::to_string(rank) + " is implausible");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = pod<std::uint64_t>();
      if (d != 0 && n > (std::size_t{1} << 40) / d) fail("array too large");
      n *= d;
    }
    Tensor t(shape);
    if (t.size() != n) fail("array shape mismatch");
    const auto raw = bytes(n * sizeof(double));
    std::memcpy(t.data(), raw.data(), raw.size());
    return t;
  }
  Matrix matrix() {
    Tensor t = tensor();
    if (t.rank() != 2) fail("expected a matrix");
    return Matrix(t.dim(0), t.dim(1), std::vector<double>(t.data(), t.data() + t.size()));
  }
  std::vector<double> vector() {
    Tensor t = tensor();
    if (t.rank() != 1) fail("expected a vector");
    return {t.data(), t.data() + t.size()};
  }
  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": corrupt checkpoint: " + what);
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  const ModelState& s = c.state;
  std::vector<std::pair<std::string, std::string>> sections;

  sections.emplace_back("net", s.net.to_text());
  sections.emplace_back("layout", layout_to_text(s.layout));
  {
    Writer w;
    const auto params = s.filters.parameters();
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const Tensor* p : params) w.tensor(*p);
    sections.emplace_back("filters", std::move(w.str()));
  }
  {
    Writer w;
    w.matrix(s.weights);
    sections.emplace_back("weights", std::move(w.str()));
  }
  {
    Writer w;
    w.matrix(s.covariance);
    sections.emplace_back("covariance", std::move(w.str()));
  }
  {
    Writer w;
    w.pod<double>(s.coefficients.floor);
    w.pod<double>(s.coefficients.scale);
    w.vector(s.coefficients.lambda);
    w.vector(s.coefficients.mu);
    sections.emplace_back("coefficients", std::move(w.str()));
  }
  {
    Writer w;
    w.vector(s.landmark_offset);
    sections.emplace_back("offset", std::move(w.str()));
  }
  {
    Writer w;
    w.pod<std::uint64_t>(c.iteration);
    w.pod<std::uint64_t>(c.config_hash);
    sections.emplace_back("meta", std::move(w.str()));
  }

  Writer out;
  out.bytes("TCMT");
  out.pod<std::uint32_t>(c.version);
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    out.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    out.bytes(name);
    out.pod<std::uint64_t>(payload.size());
    out.bytes(payload);
  }
  return std::move(out.str());
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  if (bytes.size() < 4 || r.bytes(4) != "TCMT") throw DataError(source + ": not a checkpoint (bad magic)");
  Checkpoint c;
  c.version = r.pod<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(c.version));
  }
  const auto count = r.pod<std::uint32_t>();
  std::map<std::string, std::string_view> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name(r.bytes(r.pod<std::uint32_t>()));
    const auto len = r.pod<std::uint64_t>();
    sections[name] = r.bytes(len);
  }
  if (!r.done()) r.fail("trailing bytes");
  auto section = [&](const std::string& name) {
    auto it = sections.find(name);
    if (it == sections.end()) r.fail("missing section '" + name + "'");
    return Reader(it->second, source);
  };

  ModelState& s = c.state;
  try {
    s.net = parse_net_config(std::string(sections.count("net") ? sections["net"] : std::string_view{}));
    s.layout = parse_layout(std::string(sections.count("layout") ? sections["layout"] : std::string_view{}));
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
  {
    Reader f = section("filters");
    s.filters = FilterBank::zeros(s.net);
    auto params = s.filters.parameters();
    if (f.pod<std::uint32_t>() != params.size()) f.fail("filter count does not match the network");
    for (Tensor* p : params) {
      Tensor t = f.tensor();
      if (t.shape() != p->shape()) f.fail("filter shape " + shape_string(t.shape()) + " != " + shape_string(p->shape()));
      *p = std::move(t);
    }
  }
  s.weights = section("weights").matrix();
  s.covariance = section("covariance").matrix();
  {
    Reader k = section("coefficients");
    s.coefficients.floor = k.pod<double>();
    s.coefficients.scale = k.pod<double>();
    s.coefficients.lambda = k.vector();
    s.coefficients.mu = k.vector();
  }
  s.landmark_offset = section("offset").vector();
  {
    Reader m = section("meta");
    c.iteration = m.pod<std::uint64_t>();
    c.config_hash = m.pod<std::uint64_t>();
  }
  try {
    s.validate();
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str(), path.string());
}

}  // namespace tcmt
