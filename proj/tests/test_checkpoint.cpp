#include <doctest.h>

#include <filesystem>
#include <random>

#include "support.hpp"
#include "tcmt/checkpoint.hpp"
#include "tcmt/run_config.hpp"
#include "tcmt/synthetic.hpp"
#include "tcmt/trainer.hpp"

using namespace tcmt;
namespace fs = std::filesystem;

namespace {

Checkpoint sample_checkpoint() {
  NetConfig net;
  net.input_side = 12;
  net.layers = parse_layer_list("3:3:1:pool,4:2:1:nopool", 1);
  net.feature_dim = 24;
  SynthSpec s = planted_face_spec(60, 2);
  s.image_side = 12;
  s.blob_sigma = 1.0;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.eta1 = 0.003;
  cfg.head_init_gain = 0.1;
  cfg.validation_fraction = 0.2;
  return train(generate_synthetic(s).dataset, cfg, net).checkpoint;
}

}  // namespace

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("checkpoint round trip") {
  const Checkpoint c = sample_checkpoint();
  const std::string bytes = encode_checkpoint(c);
  CHECK(bytes.substr(0, 4) == "TCMT");
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back == c);
  CHECK(encode_checkpoint(back) == bytes);

  const fs::path p = fs::temp_directory_path() / ("tcmt_ckpt_" + std::to_string(std::random_device{}()) + ".bin");
  save_checkpoint(p, c);
  const Checkpoint loaded = load_checkpoint(p);
  fs::remove(p);
  std::mt19937_64 rng(81);
  for (int k = 0; k < 10; ++k) {
    const Tensor probe = test::random_tensor({1, 12, 12}, rng, -2.0, 2.0);
    const Tensor a = net_forward(c.state.net, c.state.filters, probe);
    const Tensor b = net_forward(loaded.state.net, loaded.state.filters, probe);
    CHECK(a == b);
  }
  CHECK_THROWS_AS(load_checkpoint(p), DataError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::string bytes = encode_checkpoint(sample_checkpoint());
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{11}, bytes.size() / 2, bytes.size() - 1})
    CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, cut)), DataError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), DataError);
  std::string version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(version), DataError);
}

TEST_CASE("layout text round trip") {
  TaskLayout t;
  t.landmark_count = 10;
  t.left_eye = 1;
  t.right_eye = 0;
  TaskLayout::parse_attribute_list("smile:mouth;glasses:eyes", t);
  CHECK(parse_layout(layout_to_text(t)) == t);
}

TEST_CASE("run config") {
  const RunConfig r = parse_run_config(
      "# comment\n"
      "eta1 = 0.002\nmode=fld_plus_group\ngroup=eyes\nlayers=3:3:1:pool,4:2:1:nopool\ninput_side=12\n"
      "feature_dim=24\nmanifest=data/m.csv\nout=o.bin\n");
  CHECK(r.train.eta1 == 0.002);
  CHECK(r.train.mode == TrainMode::kFldPlusGroup);
  CHECK(r.train.group == "eyes");
  CHECK(r.manifest == fs::path("data/m.csv"));
  const NetConfig net = r.net();
  CHECK(net.input_side == 12);
  CHECK(net.feature_dim == 24);
  CHECK(net.layers.size() == 2);

  const RunConfig again = parse_run_config(r.to_text());
  CHECK(again.to_text() == r.to_text());

  CHECK(RunConfig().net() == NetConfig::default_config());
  CHECK_THROWS_AS(parse_run_config("bogus=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("eta1=abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("no equals sign\n"), ConfigError);
}
