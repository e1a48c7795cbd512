#include "tmkt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "json_fields.hpp"
#include "tmkt/data_forge.hpp"
#include "tmkt/errors.hpp"

namespace tmkt::ckpt {

using nlohmann::json;

namespace {

constexpr std::size_t kPrefix = sizeof(kMagic) + 4;

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename U>
void put_le(std::vector<unsigned char>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCategory::Format, "checkpoint: " + what); }

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> payload;
  json tensors = json::array();
  for (const auto& t : ckpt.parameters) {
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    if (n != t.data.size()) corrupt("tensor '" + t.name + "' data does not match its shape");
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "float32"},
                       {"offset", payload.size()}, {"nbytes", 4 * n}});
    for (float v : t.data) put_le(payload, std::bit_cast<std::uint32_t>(v));
  }
  tensors.push_back({{"name", "gate.theta"}, {"shape", {static_cast<int>(ckpt.gate_theta.size())}},
                     {"dtype", "float64"}, {"offset", payload.size()}, {"nbytes", 8 * ckpt.gate_theta.size()}});
  for (double v : ckpt.gate_theta) put_le(payload, std::bit_cast<std::uint64_t>(v));

  const json header = {{"format_version", kFormatVersion},
                       {"architecture", detail::spec_to_json(ckpt.spec)},
                       {"lif", detail::lif_to_json(ckpt.lif)},
                       {"tensors", tensors},
                       {"payload_bytes", payload.size()},
                       {"payload_fnv1a", fnv1a(payload)}};
  const std::string text = header.dump();
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < kPrefix) {
    corrupt("truncated: expected at least " + std::to_string(kPrefix) + " bytes, got " +
            std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) corrupt("bad magic at offset 0");
  const std::uint32_t header_len = get_le<std::uint32_t>(bytes.data() + sizeof(kMagic));
  if (bytes.size() < kPrefix + header_len) {
    corrupt("truncated header: expected " + std::to_string(kPrefix + header_len) + " bytes, got " +
            std::to_string(bytes.size()));
  }
  json header;
  try {
    header = json::parse(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
  } catch (const json::exception& e) {
    corrupt(std::string("malformed JSON header at offset ") + std::to_string(kPrefix) + ": " + e.what());
  }
  const auto payload = bytes.subspan(kPrefix + header_len);
  Checkpoint out;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kFormatVersion) corrupt("unsupported format version " + std::to_string(version));
    const auto expected = header.at("payload_bytes").get<std::uint64_t>();
    if (payload.size() != expected) {
      std::ostringstream msg;
      msg << (payload.size() < expected ? "truncated" : "oversized") << " payload: expected "
          << kPrefix + header_len + expected << " bytes, got " << bytes.size();
      corrupt(msg.str());
    }
    if (fnv1a(payload) != header.at("payload_fnv1a").get<std::uint64_t>()) corrupt("payload checksum mismatch");
    out.spec = detail::spec_from_json(header.at("architecture"));
    out.lif = detail::lif_from_json(header.at("lif"));
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<std::vector<int>>();
      const auto dtype = t.at("dtype").get<std::string>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto nbytes = t.at("nbytes").get<std::uint64_t>();
      std::uint64_t n = 1;
      for (int d : shape) {
        if (d < 0) corrupt("tensor '" + name + "' has a negative dimension");
        n *= static_cast<std::uint64_t>(d);
      }
      const std::uint64_t width = dtype == "float32" ? 4 : dtype == "float64" ? 8 : 0;
      if (width == 0) corrupt("tensor '" + name + "' has unsupported dtype '" + dtype + "'");
      if (nbytes != n * width || offset + nbytes > payload.size()) {
        corrupt("tensor '" + name + "' extends past the payload (offset " + std::to_string(offset) + ")");
      }
      const unsigned char* p = payload.data() + offset;
      if (name == "gate.theta") {
        if (width != 8) corrupt("gate.theta must be float64");
        out.gate_theta.resize(n);
        for (std::uint64_t i = 0; i < n; ++i) out.gate_theta[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
        continue;
      }
      if (width != 4) corrupt("tensor '" + name + "' must be float32");
      snn::Tensor<float> tensor{name, shape, std::vector<float>(n)};
      for (std::uint64_t i = 0; i < n; ++i) tensor.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
      out.parameters.push_back(std::move(tensor));
    }
  } catch (const json::exception& e) {
    corrupt(std::string("header is missing fields: ") + e.what());
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.category(), path.string() + ": " + e.what());
  }
}

snn::SpikingNetwork<float> restore_network(const Checkpoint& ckpt) {
  snn::SpikingNetwork<float> net(ckpt.spec, ckpt.lif, 0);
  auto& params = net.parameters();
  if (params.size() != ckpt.parameters.size()) {
    throw Error(ErrorCategory::Format, "checkpoint: tensor count does not match the recorded architecture");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.parameters[i];
    if (src.name != params[i].name || src.shape != params[i].shape) {
      throw Error(ErrorCategory::Format, "checkpoint: tensor '" + src.name + "' does not match the architecture");
    }
    params[i].data = src.data;
  }
  return net;
}

}  // namespace tmkt::ckpt
