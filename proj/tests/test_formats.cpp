#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "tmkt/checkpoint.hpp"
#include "tmkt/data_forge.hpp"
#include "tmkt/errors.hpp"
#include "tmkt/run_config.hpp"

using namespace tmkt;
namespace fs = std::filesystem;

namespace {

FrameSeq sample_seq() {
  FrameSeq s = FrameSeq::zeros({3, 2, 4, 5}, Modality::Event, 1);
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = static_cast<float>(i) * 0.37f - 3.0f;
  s.data[5] = -0.0f;
  s.data[6] = std::numeric_limits<float>::denorm_min();
  return s;
}

template <class F>
ErrorCategory category_of(F f) {
  try {
    f();
  } catch (const Error& e) {
    return e.category();
  }
  return ErrorCategory::Usage;  // sentinel: nothing thrown
}

template <class F>
std::string message_of(F f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

ckpt::Checkpoint sample_checkpoint() {
  snn::NetworkSpec spec;
  spec.height = 8;
  spec.width = 8;
  spec.conv_channels = {4};
  spec.hidden = {6};
  spec.num_classes = 3;
  spec.timesteps = 4;
  snn::LIFParams lif;
  lif.tau = 0.25;
  lif.surrogate = snn::Surrogate::Rectangular;
  snn::SpikingNetwork<float> net(spec, lif, 77);
  return {spec, lif, net.parameters(), {0.1, -0.7, 1e-17, 3.0}};
}

}  // namespace

TEST_CASE("sequence round trip is bit exact") {
  const auto s = sample_seq();
  const auto bytes = io::encode_sequence(s);
  CHECK(bytes.size() == 4 + 2 + 2 + 16 + 4 * s.data.size());
  const auto back = io::decode_sequence(bytes, Modality::Event, 1);
  CHECK(back.shape == s.shape);
  CHECK(std::memcmp(back.data.data(), s.data.data(), s.data.size() * sizeof(float)) == 0);
  CHECK(back.all(Modality::Event));

  const fs::path p = fs::temp_directory_path() / "tmkt_test_seq.tmkt";
  io::save_sequence(p, s);
  const auto loaded = io::load_sequence(p, Modality::Event, 1);
  CHECK(std::memcmp(loaded.data.data(), s.data.data(), s.data.size() * sizeof(float)) == 0);
  CHECK(io::encode_sequence(loaded) == bytes);
  fs::remove(p);
}

TEST_CASE("corrupted sequences give format errors") {
  const auto bytes = io::encode_sequence(sample_seq());
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK(category_of([&] { io::decode_sequence(truncated, Modality::Event, 0); }) == ErrorCategory::Format);
  const auto msg = message_of([&] { io::decode_sequence(truncated, Modality::Event, 0); });
  CHECK(msg.find(std::to_string(bytes.size())) != std::string::npos);
  CHECK(msg.find(std::to_string(truncated.size())) != std::string::npos);

  auto oversized = bytes;
  oversized.push_back(0);
  CHECK(category_of([&] { io::decode_sequence(oversized, Modality::Event, 0); }) == ErrorCategory::Format);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK(category_of([&] { io::decode_sequence(magic, Modality::Event, 0); }) == ErrorCategory::Format);
  CHECK(message_of([&] { io::decode_sequence(magic, Modality::Event, 0); }).find("offset 0") != std::string::npos);

  auto version = bytes;
  version[4] = 9;
  CHECK(category_of([&] { io::decode_sequence(version, Modality::Event, 0); }) == ErrorCategory::Format);
  auto rank = bytes;
  rank[6] = 3;
  CHECK(category_of([&] { io::decode_sequence(rank, Modality::Event, 0); }) == ErrorCategory::Format);
  auto dims = bytes;
  std::memset(dims.data() + 8, 0, 4);
  CHECK(category_of([&] { io::decode_sequence(dims, Modality::Event, 0); }) == ErrorCategory::Format);
  std::vector<unsigned char> tiny{'T', 'M'};
  CHECK(category_of([&] { io::decode_sequence(tiny, Modality::Event, 0); }) == ErrorCategory::Format);

  CHECK(category_of([] { io::load_sequence("/nonexistent/x.tmkt", Modality::Static, 0); }) == ErrorCategory::Data);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto c = sample_checkpoint();
  const auto bytes = ckpt::encode_checkpoint(c);
  const auto back = ckpt::decode_checkpoint(bytes);
  CHECK(back.spec.conv_channels == c.spec.conv_channels);
  CHECK(back.spec.hidden == c.spec.hidden);
  CHECK(back.spec.num_classes == 3);
  CHECK(back.lif.tau == 0.25);
  CHECK(back.lif.surrogate == snn::Surrogate::Rectangular);
  CHECK(back.gate_theta == c.gate_theta);
  REQUIRE(back.parameters.size() == c.parameters.size());
  for (std::size_t i = 0; i < c.parameters.size(); ++i) {
    CHECK(back.parameters[i].name == c.parameters[i].name);
    CHECK(back.parameters[i].shape == c.parameters[i].shape);
    CHECK(std::memcmp(back.parameters[i].data.data(), c.parameters[i].data.data(),
                      c.parameters[i].data.size() * sizeof(float)) == 0);
  }
  CHECK(ckpt::encode_checkpoint(back) == bytes);

  const fs::path p = fs::temp_directory_path() / "tmkt_test.ckpt";
  ckpt::save_checkpoint(p, c);
  CHECK(ckpt::encode_checkpoint(ckpt::load_checkpoint(p)) == bytes);
  const auto net = ckpt::restore_network(ckpt::load_checkpoint(p));
  CHECK(snn::checksum(net.parameters(), false) == snn::checksum(c.parameters, false));
  fs::remove(p);
}

TEST_CASE("corrupted checkpoints give format errors") {
  const auto bytes = ckpt::encode_checkpoint(sample_checkpoint());
  auto flip = bytes;
  flip[flip.size() - 5] ^= 0x40;  // payload bit flip -> checksum
  CHECK(category_of([&] { ckpt::decode_checkpoint(flip); }) == ErrorCategory::Format);
  auto magic = bytes;
  magic[3] = '?';
  CHECK(category_of([&] { ckpt::decode_checkpoint(magic); }) == ErrorCategory::Format);
  auto cut = bytes;
  cut.resize(bytes.size() / 2);
  CHECK(category_of([&] { ckpt::decode_checkpoint(cut); }) == ErrorCategory::Format);
  auto header = bytes;
  header[14] = '#';  // inside the JSON header
  CHECK(category_of([&] { ckpt::decode_checkpoint(header); }) == ErrorCategory::Format);
  std::vector<unsigned char> empty;
  CHECK(category_of([&] { ckpt::decode_checkpoint(empty); }) == ErrorCategory::Format);
}

TEST_CASE("run config parsing and validation") {
  const auto c = parse_run_config(R"({"dataset": "d", "timesteps": 6, "ratio": 0.5,
      "mix": {"mode": "unconditional", "schedule": "dynamic-linear", "layout": "mid"},
      "lambda": 0.25, "optimizer": {"kind": "sgd", "lr": 0.01}, "epochs": 3, "batch_size": 4,
      "seed": 9, "strategy": "bm", "architecture": {"hidden": [32], "tau": 0.3}})");
  CHECK(c.timesteps == 6);
  CHECK(c.schedule == tsm::Schedule::DynamicLinear);
  CHECK(c.layout == tsm::Layout::MidDVS);
  CHECK(c.lambda == 0.25);
  CHECK(c.optimizer.kind == "sgd");
  CHECK(c.strategy == Strategy::BatchMixing);
  CHECK(c.arch.hidden == std::vector<int>{32});
  CHECK(c.lif.tau == 0.3);
  const auto again = parse_run_config(run_config_to_json(c));
  CHECK(run_config_to_json(again) == run_config_to_json(c));

  CHECK(category_of([] { parse_run_config(R"({"lambda": -1})"); }) == ErrorCategory::Config);
  CHECK(category_of([] { parse_run_config(R"({"batch_size": 1})"); }) == ErrorCategory::Config);
  CHECK(category_of([] { parse_run_config(R"({"ratio": 0.4, "mix": {"mode": "conditional"}, "timesteps": 10})"); }) ==
        ErrorCategory::Config);
  CHECK(category_of([] { parse_run_config("{not json"); }) == ErrorCategory::Config);
  CHECK(category_of([] { load_run_config("/nonexistent/cfg.json"); }) == ErrorCategory::Config);
}
