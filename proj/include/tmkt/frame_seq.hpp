#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tmkt {

enum class Modality : std::uint8_t { Static = 0, Event = 1 };

struct SeqShape {
  int timesteps = 0;
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t frame_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::size_t size() const { return frame_size() * timesteps; }
  bool valid() const { return timesteps > 0 && channels > 0 && height > 0 && width > 0; }
  std::string to_string() const;

  friend bool operator==(const SeqShape&, const SeqShape&) = default;
};

/// T x C x H x W float sequence, row-major, with a modality tag per frame.
struct FrameSeq {
  SeqShape shape;
  std::vector<float> data;
  std::vector<Modality> modality;
  int label = -1;

  static FrameSeq zeros(const SeqShape& shape, Modality modality, int label);

  int timesteps() const { return shape.timesteps; }
  std::span<const float> frame(int t) const {
    return {data.data() + static_cast<std::size_t>(t) * shape.frame_size(), shape.frame_size()};
  }
  std::span<float> frame(int t) {
    return {data.data() + static_cast<std::size_t>(t) * shape.frame_size(), shape.frame_size()};
  }
  bool all(Modality m) const;
};

}  // namespace tmkt
