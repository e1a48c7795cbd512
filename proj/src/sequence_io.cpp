#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tmkt/data_forge.hpp"
#include "tmkt/errors.hpp"

namespace tmkt::io {

namespace {

constexpr std::size_t kRank = 4;
constexpr std::size_t kHeaderSize = 4 + 2 + 2 + 4 * kRank;

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(std::span<const unsigned char> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const unsigned char> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

[[noreturn]] void format_error(const std::string& what) { throw Error(ErrorCategory::Format, what); }

}  // namespace

std::vector<unsigned char> encode_sequence(const FrameSeq& seq) {
  if (!seq.shape.valid() || seq.data.size() != seq.shape.size()) {
    throw Error(ErrorCategory::Data, "cannot encode sequence: payload does not match shape " + seq.shape.to_string());
  }
  std::vector<unsigned char> out;
  out.reserve(kHeaderSize + 4 * seq.data.size());
  out.insert(out.end(), std::begin(kSequenceMagic), std::end(kSequenceMagic));
  put_u16(out, kSequenceVersion);
  put_u16(out, static_cast<std::uint16_t>(kRank));
  for (int d : {seq.shape.timesteps, seq.shape.channels, seq.shape.height, seq.shape.width}) {
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (float v : seq.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

FrameSeq decode_sequence(std::span<const unsigned char> bytes, Modality modality, int label) {
  if (bytes.size() < 8) {
    std::ostringstream msg;
    msg << "truncated sequence header: expected at least 8 bytes, got " << bytes.size();
    format_error(msg.str());
  }
  if (std::memcmp(bytes.data(), kSequenceMagic, 4) != 0) format_error("bad magic at offset 0: expected 'TMKT'");
  const std::uint16_t version = get_u16(bytes, 4);
  if (version != kSequenceVersion) {
    format_error("unsupported version " + std::to_string(version) + " at offset 4 (expected " +
                 std::to_string(kSequenceVersion) + ")");
  }
  const std::uint16_t rank = get_u16(bytes, 6);
  if (rank != kRank) format_error("unsupported rank " + std::to_string(rank) + " at offset 6 (expected 4)");
  if (bytes.size() < kHeaderSize) {
    std::ostringstream msg;
    msg << "truncated sequence header: expected " << kHeaderSize << " bytes, got " << bytes.size();
    format_error(msg.str());
  }
  std::uint32_t dims[kRank];
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < kRank; ++i) {
    dims[i] = get_u32(bytes, 8 + 4 * i);
    if (dims[i] == 0 || dims[i] > (1u << 24)) {
      format_error("invalid dimension " + std::to_string(dims[i]) + " at offset " + std::to_string(8 + 4 * i));
    }
    count *= dims[i];
  }
  const std::uint64_t expected = kHeaderSize + 4 * count;
  if (bytes.size() != expected) {
    std::ostringstream msg;
    msg << (bytes.size() < expected ? "truncated" : "oversized") << " sequence file: expected " << expected
        << " bytes, got " << bytes.size();
    format_error(msg.str());
  }
  FrameSeq seq;
  seq.shape = {static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
               static_cast<int>(dims[3])};
  seq.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) seq.data[i] = std::bit_cast<float>(get_u32(bytes, kHeaderSize + 4 * i));
  seq.modality.assign(static_cast<std::size_t>(seq.shape.timesteps), modality);
  seq.label = label;
  return seq;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::Data, "cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCategory::Data, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCategory::Data, "write failed for '" + path.string() + "'");
}

void save_sequence(const std::filesystem::path& path, const FrameSeq& seq) {
  write_file(path, encode_sequence(seq));
}

FrameSeq load_sequence(const std::filesystem::path& path, Modality modality, int label) {
  const auto bytes = read_file(path);
  try {
    return decode_sequence(bytes, modality, label);
  } catch (const Error& e) {
    throw Error(e.category(), path.string() + ": " + e.what());
  }
}

}  // namespace tmkt::io
