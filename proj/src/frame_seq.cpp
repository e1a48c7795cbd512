#include "tmkt/frame_seq.hpp"

#include <algorithm>

namespace tmkt {

std::string SeqShape::to_string() const {
  return std::to_string(timesteps) + "x" + std::to_string(channels) + "x" +
         std::to_string(height) + "x" + std::to_string(width);
}

FrameSeq FrameSeq::zeros(const SeqShape& shape, Modality modality, int label) {
  FrameSeq seq;
  seq.shape = shape;
  seq.data.assign(shape.size(), 0.0f);
  seq.modality.assign(static_cast<std::size_t>(shape.timesteps), modality);
  seq.label = label;
  return seq;
}

bool FrameSeq::all(Modality m) const {
  return std::all_of(modality.begin(), modality.end(), [m](Modality x) { return x == m; });
}

}  // namespace tmkt
